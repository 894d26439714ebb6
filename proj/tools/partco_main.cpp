#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "partco/config.hpp"
#include "partco/errors.hpp"
#include "partco/eval.hpp"
#include "partco/grad_check.hpp"
#include "partco/synth.hpp"

namespace fs = std::filesystem;
using namespace partco;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumerical = 3;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::vector<std::size_t> parse_candidates(const std::string& spec) {
    std::vector<std::size_t> out;
    const auto dots = spec.find("..");
    if (dots != std::string::npos) {
        const std::size_t lo = std::stoull(spec.substr(0, dots));
        const std::size_t hi = std::stoull(spec.substr(dots + 2));
        if (lo > hi) throw ValidationError("k-candidates: empty range " + spec);
        for (std::size_t k = lo; k <= hi; ++k) out.push_back(k);
        return out;
    }
    std::size_t start = 0;
    while (start <= spec.size()) {
        const auto comma = spec.find(',', start);
        const std::string tok =
            spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!tok.empty()) out.push_back(std::stoull(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ValidationError("k-candidates: empty list " + spec);
    return out;
}

struct EvalRow {
    double acc_all, acc_old, acc_new;
    std::size_t n_all, n_old, n_new;
};

// ACC over the unlabeled rows under one joint matching.
EvalRow evaluate_checkpoint(const HeadParams& params, const FeatureSet& features,
                            const DatasetManifest& manifest, TrainMode mode,
                            std::uint64_t seed) {
    const std::size_t k = manifest.num_classes();
    const auto clusters = assign_clusters(params, features, mode, k, seed);

    std::vector<std::size_t> pred;
    std::vector<int> truth;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (e.labeled) continue;
        if (e.class_id < 0)
            throw ValidationError("eval: unlabeled row '" + e.image_id +
                                  "' has no ground-truth class");
        pred.push_back(clusters[i]);
        truth.push_back(e.class_id);
    }
    const AccReport r = clustering_accuracy(pred, truth, manifest.old_classes);
    return {r.acc_all, r.acc_old, r.acc_new, r.n_all, r.n_old, r.n_new};
}

void print_eval_table(const EvalRow& row, std::ostream& os) {
    os << "split  acc       count\n";
    os << "all    " << fmt(row.acc_all) << "  " << row.n_all << "\n";
    os << "old    " << fmt(row.acc_old) << "  " << row.n_old << "\n";
    os << "new    " << fmt(row.acc_new) << "  " << row.n_new << "\n";
}

void write_eval_csv(const EvalRow& row, const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("eval: cannot open csv " + path.string());
    os << "split,acc,count\n";
    os << "all," << fmt(row.acc_all) << ',' << row.n_all << "\n";
    os << "old," << fmt(row.acc_old) << ',' << row.n_old << "\n";
    os << "new," << fmt(row.acc_new) << ',' << row.n_new << "\n";
}

void write_history_csv(const std::vector<BatchRecord>& history, const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("train: cannot open history csv " + path.string());
    os << "epoch,batch,rep_unsup,rep_sup,rep_total,cls_unsup,cls_sup,cls_total,"
          "pc_sup,pc_unsup,pc_total,gcd_total,grand_total,mean_entropy\n";
    char buf[64];
    for (const auto& rec : history) {
        const LossReport& r = rec.report;
        os << rec.epoch << ',' << rec.batch;
        for (double v : {r.rep_unsup, r.rep_sup, r.rep_total, r.cls_unsup, r.cls_sup,
                         r.cls_total, r.pc_sup, r.pc_unsup, r.pc_total, r.gcd_total,
                         r.grand_total, r.mean_entropy}) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

TrainResult run_training(const RunConfig& config, const FeatureSet& features,
                         const DatasetManifest& manifest, const PartLabelStore* labels) {
    return train(features, manifest, labels, config.train, config.seed);
}

int dispatch(int argc, char** argv) {
    CLI::App app{"partco: part-level correspondence labels for category discovery"};
    app.require_subcommand(1);

    // ---- gen ----
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic planted dataset");
    std::string gen_preset = "fine_grained", gen_out;
    std::uint64_t gen_seed = 0;
    std::optional<double> noise, occl, jitter;
    std::optional<std::size_t> classes, old_cls, ipc, grid_n, dim_n, parts, vocab, subparts;
    gen_cmd->add_option("--preset", gen_preset, "fine_grained|generic")->required();
    gen_cmd->add_option("--out", gen_out, "Output directory")->required();
    gen_cmd->add_option("--seed", gen_seed, "RNG seed");
    gen_cmd->add_option("--noise", noise);
    gen_cmd->add_option("--occlusion", occl);
    gen_cmd->add_option("--scale-jitter", jitter);
    gen_cmd->add_option("--classes", classes);
    gen_cmd->add_option("--old-classes", old_cls);
    gen_cmd->add_option("--images-per-class", ipc);
    gen_cmd->add_option("--grid", grid_n);
    gen_cmd->add_option("--dim", dim_n);
    gen_cmd->add_option("--parts", parts);
    gen_cmd->add_option("--vocab", vocab);
    gen_cmd->add_option("--subparts", subparts);

    // ---- build-labels ----
    auto* build_cmd = app.add_subcommand("build-labels", "Construct part correspondence labels");
    std::string bl_features, bl_manifest, bl_order = "1", bl_out, bl_cands = "2..10";
    std::size_t bl_per_class = 1;
    double bl_tau = 0.6;
    std::uint64_t bl_seed = 0;
    build_cmd->add_option("--features", bl_features)->required();
    build_cmd->add_option("--manifest", bl_manifest)->required();
    build_cmd->add_option("--order", bl_order, "1|2|both");
    build_cmd->add_option("--per-class", bl_per_class);
    build_cmd->add_option("--k-candidates", bl_cands, "range a..b or comma list");
    build_cmd->add_option("--tau-obj", bl_tau);
    build_cmd->add_option("--seed", bl_seed);
    build_cmd->add_option("--out", bl_out)->required();

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "Train heads and prototypes");
    std::string tr_features, tr_manifest, tr_labels, tr_config, tr_out, tr_history;
    std::vector<std::string> tr_sets;
    train_cmd->add_option("--features", tr_features)->required();
    train_cmd->add_option("--manifest", tr_manifest)->required();
    train_cmd->add_option("--labels", tr_labels, "Part label store (.plm)");
    train_cmd->add_option("--config", tr_config, "key=value config file");
    train_cmd->add_option("--set", tr_sets, "key=value override (repeatable)");
    train_cmd->add_option("--out", tr_out, "Checkpoint path (.pckp)")->required();
    train_cmd->add_option("--history", tr_history, "Per-batch loss CSV");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "Hungarian-matched ACC over All/Old/New");
    std::string ev_ckpt, ev_features, ev_manifest, ev_mode = "parametric", ev_csv;
    std::uint64_t ev_seed = 0;
    eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
    eval_cmd->add_option("--features", ev_features)->required();
    eval_cmd->add_option("--manifest", ev_manifest)->required();
    eval_cmd->add_option("--mode", ev_mode, "parametric|nonparametric");
    eval_cmd->add_option("--seed", ev_seed, "k-means seed for nonparametric mode");
    eval_cmd->add_option("--csv", ev_csv, "Also write machine-readable CSV here");

    // ---- gradcheck ----
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    std::string gc_loss = "all";
    std::size_t gc_instances = 50;
    double gc_h = 1e-5, gc_tol = 1e-4;
    std::uint64_t gc_seed = 0;
    grad_cmd->add_option("--loss", gc_loss, "Loss name or 'all'");
    grad_cmd->add_option("--instances", gc_instances);
    grad_cmd->add_option("--step", gc_h, "FD step size");
    grad_cmd->add_option("--tol", gc_tol, "Max allowed relative error");
    grad_cmd->add_option("--seed", gc_seed);

    // ---- ablate ----
    auto* abl_cmd = app.add_subcommand("ablate", "Sweep part_dim or label order");
    std::string ab_sweep, ab_features, ab_manifest, ab_labels, ab_config, ab_out;
    std::vector<std::string> ab_sets;
    abl_cmd->add_option("--sweep", ab_sweep, "dim|order")->required();
    abl_cmd->add_option("--features", ab_features)->required();
    abl_cmd->add_option("--manifest", ab_manifest)->required();
    abl_cmd->add_option("--labels", ab_labels, "Label store with the needed levels")->required();
    abl_cmd->add_option("--config", ab_config);
    abl_cmd->add_option("--set", ab_sets, "key=value override (repeatable)");
    abl_cmd->add_option("--out", ab_out, "CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    if (gen_cmd->parsed()) {
        SynthConfig config = preset(gen_preset);
        config.seed = gen_seed;
        if (noise) config.noise_sigma = *noise;
        if (occl) config.occlusion_prob = *occl;
        if (jitter) config.scale_jitter = *jitter;
        if (classes) config.num_classes = *classes;
        if (old_cls) config.old_classes = *old_cls;
        if (ipc) config.images_per_class = *ipc;
        if (grid_n) config.grid = *grid_n;
        if (dim_n) config.dim = *dim_n;
        if (parts) config.parts_per_class = *parts;
        if (vocab) config.part_vocab_size = *vocab;
        if (subparts) config.subparts_per_part = *subparts;

        const SynthOutput out = generate(config);
        fs::create_directories(gen_out);
        write_features(out.features, fs::path(gen_out) / "features.ptcf");
        write_manifest(out.manifest, fs::path(gen_out) / "manifest.csv");
        write_part_labels(
            truth_to_store(out.truth, out.features.num_images, out.features.patches_per_image),
            fs::path(gen_out) / "truth.truth");
        std::cout << "wrote " << out.features.num_images << " images ("
                  << out.features.patches_per_image << " patches x " << out.features.dim
                  << " dims) to " << gen_out << "\n";
        return kExitOk;
    }

    if (build_cmd->parsed()) {
        const FeatureSet features = read_features(bl_features);
        const DatasetManifest manifest = load_manifest(bl_manifest);
        LabelBuildConfig config;
        config.per_class = bl_per_class;
        config.tau_obj = bl_tau;
        config.k_candidates = parse_candidates(bl_cands);
        LabelOrder order;
        if (bl_order == "1") order = LabelOrder::First;
        else if (bl_order == "2") order = LabelOrder::Second;
        else if (bl_order == "both") order = LabelOrder::Both;
        else throw ValidationError("build-labels: order must be 1|2|both");

        const PartLabelStore store =
            build_labels(features, manifest, order, config, bl_seed, fs::path(bl_out));
        for (const auto& level : store.levels)
            std::cout << "order " << level.order << ": " << level.label_count << " part labels\n";
        std::cout << "wrote " << bl_out << "\n";
        return kExitOk;
    }

    if (train_cmd->parsed()) {
        RunConfig config =
            tr_config.empty() ? RunConfig::defaults() : load_run_config(tr_config);
        for (const auto& kv : tr_sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ValidationError("train: --set expects key=value, got " + kv);
            config.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        const FeatureSet features = read_features(tr_features);
        const DatasetManifest manifest = load_manifest(tr_manifest);

        PartLabelStore labels;
        const PartLabelStore* labels_ptr = nullptr;
        if (config.part_order() != PartLossOrder::Off) {
            const std::string path = !tr_labels.empty() ? tr_labels : config.labels_path;
            if (path.empty())
                throw ValidationError("train: part losses enabled but no --labels given");
            labels = read_part_labels(path);
            labels_ptr = &labels;
        }
        config.train.part_order = config.part_order();

        const TrainResult result = run_training(config, features, manifest, labels_ptr);
        write_checkpoint(result.params, tr_out);
        if (!tr_history.empty()) write_history_csv(result.history, tr_history);
        if (!result.history.empty()) {
            const LossReport& last = result.history.back().report;
            std::cout << "final grand_total " << fmt(last.grand_total) << " over "
                      << result.history.size() << " batches\n";
        }
        std::cout << "wrote " << tr_out << "\n";
        return kExitOk;
    }

    if (eval_cmd->parsed()) {
        const HeadParams params = read_checkpoint(ev_ckpt);
        const FeatureSet features = read_features(ev_features);
        const DatasetManifest manifest = load_manifest(ev_manifest);
        TrainMode mode;
        if (ev_mode == "parametric") mode = TrainMode::Parametric;
        else if (ev_mode == "nonparametric") mode = TrainMode::NonParametric;
        else throw ValidationError("eval: mode must be parametric|nonparametric");

        const EvalRow row = evaluate_checkpoint(params, features, manifest, mode, ev_seed);
        print_eval_table(row, std::cout);
        if (!ev_csv.empty()) write_eval_csv(row, ev_csv);
        return kExitOk;
    }

    if (grad_cmd->parsed()) {
        std::vector<std::string> names;
        if (gc_loss == "all")
            names = grad_check_loss_names();
        else
            names.push_back(gc_loss);
        bool ok = true;
        for (const auto& name : names) {
            double worst = 0.0;
            for (std::size_t i = 0; i < gc_instances; ++i)
                worst = std::max(worst, grad_check(name, gc_seed + i, gc_h));
            const bool pass = worst < gc_tol;
            ok = ok && pass;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.3e", worst);
            std::cout << "loss=" << name << " worst_rel_err=" << buf << " "
                      << (pass ? "pass" : "FAIL") << "\n";
        }
        return ok ? kExitOk : kExitNumerical;
    }

    if (abl_cmd->parsed()) {
        RunConfig base = ab_config.empty() ? RunConfig::defaults() : load_run_config(ab_config);
        for (const auto& kv : ab_sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ValidationError("ablate: --set expects key=value, got " + kv);
            base.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        const FeatureSet features = read_features(ab_features);
        const DatasetManifest manifest = load_manifest(ab_manifest);
        const PartLabelStore labels = read_part_labels(ab_labels);

        std::ofstream os(ab_out, std::ios::trunc);
        if (!os) throw IoError("ablate: cannot open " + ab_out);

        auto run_once = [&](RunConfig config) {
            config.train.part_order = config.part_order();
            const PartLabelStore* ptr =
                config.train.part_order == PartLossOrder::Off ? nullptr : &labels;
            const TrainResult result = run_training(config, features, manifest, ptr);
            return evaluate_checkpoint(result.params, features, manifest, config.train.mode,
                                       config.seed);
        };

        if (ab_sweep == "dim") {
            os << "dim,acc_all,acc_old,acc_new\n";
            for (std::size_t dim : {64, 128, 256, 512}) {
                RunConfig config = base;
                config.train.part_dim = dim;
                const EvalRow row = run_once(config);
                os << dim << ',' << fmt(row.acc_all) << ',' << fmt(row.acc_old) << ','
                   << fmt(row.acc_new) << "\n";
                std::cout << "dim=" << dim << " all=" << fmt(row.acc_all) << "\n";
            }
        } else if (ab_sweep == "order") {
            os << "order,acc_all,acc_old,acc_new\n";
            for (const std::string order : {"1", "2", "both", "off"}) {
                RunConfig config = base;
                config.set("order", order);
                const EvalRow row = run_once(config);
                os << order << ',' << fmt(row.acc_all) << ',' << fmt(row.acc_old) << ','
                   << fmt(row.acc_new) << "\n";
                std::cout << "order=" << order << " all=" << fmt(row.acc_all) << "\n";
            }
        } else {
            throw ValidationError("ablate: sweep must be dim|order");
        }
        std::cout << "wrote " << ab_out << "\n";
        return kExitOk;
    }

    return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
