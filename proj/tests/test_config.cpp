#include <doctest.h>

#include "partco/config.hpp"

using namespace partco;

TEST_CASE("defaults match the training recipe") {
    const RunConfig c = RunConfig::defaults();
    CHECK(c.train.lambda_b == 0.35);
    CHECK(c.train.part_dim == 128);
    CHECK(c.train.epochs == 200);
    CHECK(c.train.batch_size == 128);
    CHECK(c.train.lr0 == 0.1);
    CHECK(c.train.lr_min == 0.001);
    CHECK(c.tau_obj == 0.6);
    CHECK(c.per_class == 1);
    CHECK(c.train.mode == TrainMode::Parametric);
}

TEST_CASE("key=value text parsing with comments and whitespace") {
    RunConfig c = RunConfig::defaults();
    apply_config_text(c,
                      "# a comment\n"
                      "epochs = 50\n"
                      "lambda_b=0.5\n"
                      "mode=nonparametric\n"
                      "order=both   # trailing comment\n"
                      "\n"
                      "features=/tmp/x.ptcf\n");
    CHECK(c.train.epochs == 50);
    CHECK(c.train.lambda_b == 0.5);
    CHECK(c.train.mode == TrainMode::NonParametric);
    CHECK(c.order == "both");
    CHECK(c.part_order() == PartLossOrder::Both);
    CHECK(c.features_path == "/tmp/x.ptcf");
}

TEST_CASE("unknown keys and malformed values are rejected") {
    RunConfig c = RunConfig::defaults();
    CHECK_THROWS_AS(c.set("unknown_key", "1"), ValidationError);
    CHECK_THROWS_AS(c.set("epochs", "fifty"), ValidationError);
    CHECK_THROWS_AS(c.set("mode", "sideways"), ValidationError);
    CHECK_THROWS_AS(c.set("order", "3"), ValidationError);
    CHECK_THROWS_AS(apply_config_text(c, "epochs 50\n"), ValidationError);
}

TEST_CASE("order mapping to part loss and label orders") {
    RunConfig c = RunConfig::defaults();
    c.set("order", "off");
    CHECK(c.part_order() == PartLossOrder::Off);
    c.set("order", "1");
    CHECK(c.part_order() == PartLossOrder::First);
    CHECK(c.label_order() == LabelOrder::First);
    c.set("order", "2");
    CHECK(c.part_order() == PartLossOrder::Second);
    CHECK(c.label_order() == LabelOrder::Second);
}
