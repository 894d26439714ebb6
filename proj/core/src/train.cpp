#include "partco/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "partco/augment.hpp"
#include "partco/rng.hpp"
#include "partco/schedule.hpp"

namespace partco {

namespace {

struct SgdState {
    std::vector<std::vector<double>> velocity;  // aligned with params.tensors()
};

void sgd_step(HeadParams& params, HeadParams& grads, SgdState& state, double lr,
              double momentum) {
    auto p = params.tensors();
    auto g = grads.tensors();
    if (state.velocity.empty()) {
        state.velocity.resize(p.size());
        for (std::size_t t = 0; t < p.size(); ++t)
            state.velocity[t].assign(p[t].rows * p[t].cols, 0.0);
    }
    for (std::size_t t = 0; t < p.size(); ++t) {
        const std::size_t n = p[t].rows * p[t].cols;
        for (std::size_t i = 0; i < n; ++i) {
            double& v = state.velocity[t][i];
            v = momentum * v + g[t].data[i];
            p[t].data[i] -= lr * v;
        }
    }
    params.renormalize_prototypes();
}

void zero_grads(HeadParams& grads) {
    for (auto& t : grads.tensors()) std::fill(t.data, t.data + t.rows * t.cols, 0.0);
}

DenseMatrix column_means_per_row_block(const DenseMatrix& patches) {
    DenseMatrix mean(1, patches.cols());
    for (std::size_t i = 0; i < patches.rows(); ++i) {
        auto r = patches.row(i);
        for (std::size_t j = 0; j < patches.cols(); ++j) mean(0, j) += r[j];
    }
    for (double& v : mean.data()) v /= static_cast<double>(patches.rows());
    return mean;
}

std::vector<std::uint32_t> levels_for(PartLossOrder order) {
    switch (order) {
        case PartLossOrder::Off: return {};
        case PartLossOrder::First: return {1};
        case PartLossOrder::Second: return {2};
        case PartLossOrder::Both: return {1, 2};
    }
    return {};
}

}  // namespace

TrainResult train(const FeatureSet& fs, const DatasetManifest& manifest,
                  const PartLabelStore* labels, const TrainOptions& opts, std::uint64_t seed,
                  const EvalHook& hook) {
    fs.validate();
    if (manifest.size() != fs.num_images)
        throw ValidationError("train: manifest rows != feature images");
    if (fs.num_images < 2) throw ArgumentError("train: need at least 2 samples");
    if (opts.lambda_b < 0.0 || opts.lambda_b > 1.0)
        throw ArgumentError("train: lambda_b outside [0,1]");

    const auto level_ids = levels_for(opts.part_order);
    for (std::uint32_t lvl : level_ids) {
        if (!labels) throw ArgumentError("train: part losses enabled but no label store given");
        if (!labels->level(lvl))
            throw ArgumentError("train: label store lacks level " + std::to_string(lvl));
        if (labels->num_images != fs.num_images ||
            labels->patches_per_image != fs.patches_per_image)
            throw ValidationError("train: label store shape does not match features");
    }

    std::size_t num_classes = opts.num_classes;
    if (num_classes == 0) num_classes = manifest.num_classes();
    if (num_classes == 0) throw ValidationError("train: no classes known");

    const std::size_t n = fs.num_images;
    const std::size_t d = fs.dim;
    const double lambda = opts.lambda_b;
    const bool parametric = opts.mode == TrainMode::Parametric;

    TrainResult result;
    result.params =
        HeadParams::make(d, opts.rep_dim, opts.part_dim, num_classes, mix_seed(seed, 0x696e6974ULL));
    HeadParams grads =
        HeadParams::make(d, opts.rep_dim, opts.part_dim, num_classes, /*seed=*/0);
    SgdState sgd;

    std::vector<std::optional<int>> class_of(n);
    for (std::size_t i = 0; i < n; ++i)
        if (manifest.entries[i].labeled) class_of[i] = manifest.entries[i].class_id;

    const std::size_t batch_size = std::min(opts.batch_size, n);
    if (batch_size < 2) throw ArgumentError("train: batch size must be at least 2");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, opts.epochs, opts.lr0, opts.lr_min);
        std::mt19937_64 shuffle_rng = make_rng(mix_seed(seed, 0x6f72646572ULL, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        const std::size_t num_batches = n / batch_size;  // trailing remainder dropped
        for (std::size_t batch = 0; batch < num_batches; ++batch) {
            const std::size_t* ids = order.data() + batch * batch_size;
            const std::size_t b = batch_size;

            // Per-sample augmented views; global means and pooled raw part
            // features come straight from the view patches.
            DenseMatrix ga(b, d), gb(b, d);
            std::vector<PartKey> part_keys;
            std::vector<std::vector<double>> part_rows;
            std::vector<std::optional<int>> batch_class(b);
            for (std::size_t s = 0; s < b; ++s) {
                const std::size_t img = ids[s];
                batch_class[s] = class_of[img];
                const DenseMatrix patches = fs.image_matrix(img);
                const ViewPair views = augment_views(
                    patches, opts.aug_strength,
                    mix_seed(seed, 0x617567ULL, (static_cast<std::uint64_t>(epoch) << 32) | img));

                const DenseMatrix ma = column_means_per_row_block(views.a);
                const DenseMatrix mb = column_means_per_row_block(views.b);
                std::copy(ma.data().begin(), ma.data().end(), ga.row(s).begin());
                std::copy(mb.data().begin(), mb.data().end(), gb.row(s).begin());

                for (std::uint32_t lvl : level_ids) {
                    const PartLevel* level = labels->level(lvl);
                    std::vector<std::uint16_t> img_labels(
                        level->labels.begin() + img * fs.patches_per_image,
                        level->labels.begin() + (img + 1) * fs.patches_per_image);
                    auto pooled = pool_parts(views.a, img_labels);
                    for (auto& [part, vec] : pooled) {
                        PartKey key;
                        key.sample = s;
                        // Level-disambiguated part id keeps level pools separate.
                        key.part = (static_cast<std::uint32_t>(lvl) << 16) | part;
                        key.group = batch_class[s];
                        part_keys.push_back(key);
                        part_rows.push_back(std::move(vec));
                    }
                }
            }

            // Shared trunk, then heads.
            const DenseMatrix ga_t = result.params.trunk.forward(ga);
            const DenseMatrix gb_t = result.params.trunk.forward(gb);

            const auto psi_a = result.params.psi.forward(ga_t);
            const auto psi_b = result.params.psi.forward(gb_t);
            const DenseMatrix za = normalize_rows(psi_a.output);
            const DenseMatrix zb = normalize_rows(psi_b.output);

            const DenseMatrix oa = normalize_rows(ga_t);
            const DenseMatrix ob = normalize_rows(gb_t);

            LossComponents components;
            zero_grads(grads);

            DenseMatrix dza(b, opts.rep_dim), dzb(b, opts.rep_dim);
            {
                const auto rep_u = rep_contrastive_unsup(za, zb, opts.tau_r);
                components.rep_unsup = rep_u.value;
                const double w = 1.0 - lambda;
                for (std::size_t i = 0; i < dza.data().size(); ++i) {
                    dza.data()[i] += w * rep_u.dz.data()[i];
                    dzb.data()[i] += w * rep_u.dz_prime.data()[i];
                }
                const auto rep_s = rep_contrastive_sup(za, batch_class, opts.tau_r);
                components.rep_sup = rep_s.value;
                if (!rep_s.empty)
                    for (std::size_t i = 0; i < dza.data().size(); ++i)
                        dza.data()[i] += lambda * rep_s.dz.data()[i];
            }

            DenseMatrix doa(b, d), dob(b, d);
            DenseMatrix pa, pb;
            if (parametric) {
                pa = classifier_probs(oa, result.params.prototypes, opts.tau_s);
                pb = classifier_probs(ob, result.params.prototypes, opts.tau_s);
                // Cross-view teachers, stop-gradient.
                const DenseMatrix qa = classifier_probs(oa, result.params.prototypes, opts.tau_t);
                const DenseMatrix qb = classifier_probs(ob, result.params.prototypes, opts.tau_t);

                const auto cls_u = cls_loss_unsup(pa, pb, qa, qb, opts.xi);
                components.cls_unsup = cls_u.value;
                components.mean_entropy = cls_u.mean_entropy;
                const auto cls_s = cls_loss_sup(pa, batch_class);
                components.cls_sup = cls_s.value;

                DenseMatrix dpa(b, num_classes), dpb(b, num_classes);
                const double wu = 1.0 - lambda;
                for (std::size_t i = 0; i < dpa.data().size(); ++i) {
                    dpa.data()[i] = wu * cls_u.dp.data()[i];
                    dpb.data()[i] = wu * cls_u.dp_prime.data()[i];
                }
                if (!cls_s.empty)
                    for (std::size_t i = 0; i < dpa.data().size(); ++i)
                        dpa.data()[i] += lambda * cls_s.dp.data()[i];

                classifier_backward(oa, pa, result.params.prototypes, opts.tau_s, dpa,
                                    grads.prototypes, &doa);
                classifier_backward(ob, pb, result.params.prototypes, opts.tau_s, dpb,
                                    grads.prototypes, &dob);
            }

            DenseMatrix part_raw(part_rows.size(), d);
            DenseMatrix dpart_t;
            Mlp::Cache psi_p_cache;
            DenseMatrix part_t, hmat;
            if (!part_keys.empty()) {
                for (std::size_t r = 0; r < part_rows.size(); ++r)
                    std::copy(part_rows[r].begin(), part_rows[r].end(), part_raw.row(r).begin());
                part_t = result.params.trunk.forward(part_raw);
                psi_p_cache = result.params.psi_p.forward(part_t);
                hmat = normalize_rows(psi_p_cache.output);

                DenseMatrix dh(hmat.rows(), hmat.cols());
                const auto pc_s = part_contrastive_sup(hmat, part_keys, opts.tau_r);
                components.pc_sup = pc_s.value;
                if (!pc_s.empty)
                    for (std::size_t i = 0; i < dh.data().size(); ++i)
                        dh.data()[i] += lambda * pc_s.dh.data()[i];

                if (parametric) {
                    // Pseudo-labels: student argmax on view a; labeled samples
                    // keep their true group in the supervised term only.
                    std::vector<double> confidence(b, 0.0);
                    std::vector<int> pseudo(b, 0);
                    for (std::size_t s = 0; s < b; ++s) {
                        double best = -1.0;
                        for (std::size_t k = 0; k < num_classes; ++k)
                            if (pa(s, k) > best) {
                                best = pa(s, k);
                                pseudo[s] = static_cast<int>(k);
                            }
                        confidence[s] = best;
                    }
                    std::vector<PartKey> unsup_keys = part_keys;
                    for (auto& key : unsup_keys)
                        key.group = batch_class[key.sample] ? std::nullopt
                                                            : std::optional<int>(pseudo[key.sample]);
                    const auto pc_u = part_contrastive_unsup(hmat, unsup_keys, confidence,
                                                             opts.confidence_threshold, opts.tau_r);
                    components.pc_unsup = pc_u.value;
                    if (!pc_u.empty)
                        for (std::size_t i = 0; i < dh.data().size(); ++i)
                            dh.data()[i] += (1.0 - lambda) * pc_u.dh.data()[i];
                }

                const DenseMatrix dpsi_p_out =
                    normalize_rows_backward(psi_p_cache.output, hmat, dh);
                dpart_t = DenseMatrix(part_t.rows(), d);
                result.params.psi_p.backward(psi_p_cache, dpsi_p_out, grads.psi_p, &dpart_t);
            }

            const LossReport report = total_loss(components, lambda, opts.mode);
            if (const char* bad = report.first_non_finite())
                throw NumericalError("train: non-finite " + std::string(bad) + " at epoch " +
                                     std::to_string(epoch) + " batch " + std::to_string(batch));
            result.history.push_back({epoch, batch, report});

            // Backprop the view paths into the trunk.
            const DenseMatrix dpsi_a_out = normalize_rows_backward(psi_a.output, za, dza);
            const DenseMatrix dpsi_b_out = normalize_rows_backward(psi_b.output, zb, dzb);
            DenseMatrix dga_t(b, d), dgb_t(b, d);
            result.params.psi.backward(psi_a, dpsi_a_out, grads.psi, &dga_t);
            result.params.psi.backward(psi_b, dpsi_b_out, grads.psi, &dgb_t);
            if (parametric) {
                const DenseMatrix doa_g = normalize_rows_backward(ga_t, oa, doa);
                const DenseMatrix dob_g = normalize_rows_backward(gb_t, ob, dob);
                for (std::size_t i = 0; i < dga_t.data().size(); ++i) {
                    dga_t.data()[i] += doa_g.data()[i];
                    dgb_t.data()[i] += dob_g.data()[i];
                }
            }
            result.params.trunk.backward(ga, dga_t, grads.trunk, nullptr);
            result.params.trunk.backward(gb, dgb_t, grads.trunk, nullptr);
            if (!part_keys.empty())
                result.params.trunk.backward(part_raw, dpart_t, grads.trunk, nullptr);

            sgd_step(result.params, grads, sgd, lr, opts.momentum);
            if (!result.params.all_finite())
                throw NumericalError("train: non-finite parameters after step at epoch " +
                                     std::to_string(epoch));
        }

        if (hook && opts.eval_every > 0 && (epoch + 1) % opts.eval_every == 0)
            hook(epoch, result.params);
    }
    return result;
}

}  // namespace partco
