#include "partco/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "partco/errors.hpp"

namespace partco {

namespace {

// log sum_{j in idx} exp(v[j]) with max-shift.
double log_sum_exp(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j : idx) mx = std::max(mx, v[j]);
    double s = 0.0;
    for (std::size_t j : idx) s += std::exp(v[j] - mx);
    return mx + std::log(s);
}

DenseMatrix gram(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix s(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) s(i, j) = dot(a.row(i), b.row(j));
    return s;
}

// dZ_i += sum_j w_ij * B_j ; dB_j += sum_i w_ij * A_i  for similarity grads w.
void accumulate_sim_grads(const DenseMatrix& w, const DenseMatrix& a, const DenseMatrix& b,
                          DenseMatrix& da, DenseMatrix& db) {
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double g = w(i, j);
            if (g == 0.0) continue;
            auto ai = a.row(i);
            auto bj = b.row(j);
            auto dai = da.row(i);
            auto dbj = db.row(j);
            for (std::size_t c = 0; c < a.cols(); ++c) {
                dai[c] += g * bj[c];
                dbj[c] += g * ai[c];
            }
        }
}

}  // namespace

bool LossReport::all_finite() const { return first_non_finite() == nullptr; }

const char* LossReport::first_non_finite() const {
    const struct {
        const char* name;
        double v;
    } fields[] = {{"rep_unsup", rep_unsup}, {"rep_sup", rep_sup},   {"rep_total", rep_total},
                  {"cls_unsup", cls_unsup}, {"cls_sup", cls_sup},   {"cls_total", cls_total},
                  {"pc_sup", pc_sup},       {"pc_unsup", pc_unsup}, {"pc_total", pc_total},
                  {"gcd_total", gcd_total}, {"grand_total", grand_total},
                  {"mean_entropy", mean_entropy}};
    for (const auto& f : fields)
        if (!std::isfinite(f.v)) return f.name;
    return nullptr;
}

LossReport total_loss(const LossComponents& c, double lambda_b, TrainMode mode) {
    LossReport r;
    r.rep_unsup = c.rep_unsup;
    r.rep_sup = c.rep_sup;
    r.rep_total = (1.0 - lambda_b) * r.rep_unsup + lambda_b * r.rep_sup;
    if (mode == TrainMode::Parametric) {
        r.cls_unsup = c.cls_unsup;
        r.cls_sup = c.cls_sup;
        r.pc_unsup = c.pc_unsup;
        r.mean_entropy = c.mean_entropy;
    }
    r.cls_total = (1.0 - lambda_b) * r.cls_unsup + lambda_b * r.cls_sup;
    r.pc_sup = c.pc_sup;
    r.pc_total = (1.0 - lambda_b) * r.pc_unsup + lambda_b * r.pc_sup;
    r.gcd_total = (mode == TrainMode::Parametric) ? r.cls_total + r.rep_total : r.rep_total;
    r.grand_total = r.gcd_total + r.pc_total;
    return r;
}

RepUnsupResult rep_contrastive_unsup(const DenseMatrix& z, const DenseMatrix& z_prime,
                                     double tau) {
    const std::size_t b = z.rows();
    if (b != z_prime.rows() || z.cols() != z_prime.cols())
        throw DimensionError("rep_contrastive_unsup: view shapes differ");
    if (b < 2)
        throw ArgumentError("rep_contrastive_unsup: batch of " + std::to_string(b) +
                            " leaves an empty denominator");
    if (tau <= 0.0) throw ArgumentError("rep_contrastive_unsup: tau must be positive");

    const DenseMatrix s = gram(z, z_prime);
    RepUnsupResult out;
    out.dz = DenseMatrix(b, z.cols());
    out.dz_prime = DenseMatrix(b, z.cols());

    DenseMatrix w(b, b);  // dL/ds
    std::vector<double> logits(b);
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < b; ++i) {
        others.clear();
        for (std::size_t j = 0; j < b; ++j) {
            logits[j] = s(i, j) / tau;
            if (j != i) others.push_back(j);
        }
        const double lse = log_sum_exp(logits, others);
        out.value += (-logits[i] + lse) / static_cast<double>(b);
        w(i, i) = -1.0 / (static_cast<double>(b) * tau);
        for (std::size_t j : others)
            w(i, j) = std::exp(logits[j] - lse) / (static_cast<double>(b) * tau);
    }
    accumulate_sim_grads(w, z, z_prime, out.dz, out.dz_prime);
    return out;
}

RepSupResult rep_contrastive_sup(const DenseMatrix& z,
                                 const std::vector<std::optional<int>>& labels, double tau) {
    const std::size_t b = z.rows();
    if (labels.size() != b) throw DimensionError("rep_contrastive_sup: labels length mismatch");
    if (tau <= 0.0) throw ArgumentError("rep_contrastive_sup: tau must be positive");

    RepSupResult out;
    out.dz = DenseMatrix(b, z.cols());

    std::vector<std::vector<std::size_t>> positives(b);
    std::size_t num_anchors = 0;
    for (std::size_t i = 0; i < b; ++i) {
        if (!labels[i]) continue;
        for (std::size_t q = 0; q < b; ++q)
            if (q != i && labels[q] && *labels[q] == *labels[i]) positives[i].push_back(q);
        if (!positives[i].empty()) ++num_anchors;
    }
    if (num_anchors == 0) {
        out.empty = true;
        return out;
    }

    const DenseMatrix s = gram(z, z);
    DenseMatrix w(b, b);
    std::vector<double> logits(b);
    std::vector<std::size_t> others;
    const double inv_a = 1.0 / static_cast<double>(num_anchors);
    for (std::size_t i = 0; i < b; ++i) {
        if (positives[i].empty()) continue;
        others.clear();
        for (std::size_t j = 0; j < b; ++j) {
            logits[j] = s(i, j) / tau;
            if (j != i) others.push_back(j);
        }
        const double lse = log_sum_exp(logits, others);
        const double inv_n = 1.0 / static_cast<double>(positives[i].size());
        for (std::size_t q : positives[i]) {
            out.value += inv_a * inv_n * (-logits[q] + lse);
            w(i, q) += -inv_a * inv_n / tau;
        }
        // The log-denominator appears once per positive, each weighted inv_n.
        for (std::size_t j : others) w(i, j) += inv_a * std::exp(logits[j] - lse) / tau;
    }
    DenseMatrix dz2(b, z.cols());
    accumulate_sim_grads(w, z, z, out.dz, dz2);
    for (std::size_t i = 0; i < out.dz.data().size(); ++i) out.dz.data()[i] += dz2.data()[i];
    return out;
}

DenseMatrix classifier_probs(const DenseMatrix& o, const DenseMatrix& prototypes, double tau) {
    if (o.cols() != prototypes.cols())
        throw DimensionError("classifier_probs: feature dim does not match prototypes");
    if (tau <= 0.0) throw ArgumentError("classifier_probs: tau must be positive");
    const std::size_t b = o.rows(), k = prototypes.rows();
    DenseMatrix p(b, k);
    for (std::size_t i = 0; i < b; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            p(i, c) = dot(o.row(i), prototypes.row(c)) / tau;
            mx = std::max(mx, p(i, c));
        }
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            p(i, c) = std::exp(p(i, c) - mx);
            z += p(i, c);
        }
        for (std::size_t c = 0; c < k; ++c) p(i, c) /= z;
    }
    return p;
}

void classifier_backward(const DenseMatrix& o, const DenseMatrix& probs,
                         const DenseMatrix& prototypes, double tau, const DenseMatrix& dprobs,
                         DenseMatrix& dprototypes, DenseMatrix* dout_o) {
    const std::size_t b = o.rows(), k = prototypes.rows(), d = o.cols();
    for (std::size_t i = 0; i < b; ++i) {
        double inner = 0.0;
        for (std::size_t c = 0; c < k; ++c) inner += dprobs(i, c) * probs(i, c);
        for (std::size_t c = 0; c < k; ++c) {
            const double dlogit = probs(i, c) * (dprobs(i, c) - inner);
            if (dlogit == 0.0) continue;
            const double g = dlogit / tau;
            for (std::size_t j = 0; j < d; ++j) {
                dprototypes(c, j) += g * o(i, j);
                if (dout_o) (*dout_o)(i, j) += g * prototypes(c, j);
            }
        }
    }
}

ClsUnsupResult cls_loss_unsup(const DenseMatrix& p, const DenseMatrix& p_prime,
                              const DenseMatrix& teacher_q, const DenseMatrix& teacher_q_prime,
                              double xi) {
    const std::size_t b = p.rows(), k = p.cols();
    if (p_prime.rows() != b || teacher_q.rows() != b || teacher_q_prime.rows() != b ||
        p_prime.cols() != k || teacher_q.cols() != k || teacher_q_prime.cols() != k)
        throw DimensionError("cls_loss_unsup: shape mismatch");

    ClsUnsupResult out;
    out.dp = DenseMatrix(b, k);
    out.dp_prime = DenseMatrix(b, k);

    const double inv_2b = 1.0 / (2.0 * static_cast<double>(b));
    std::vector<double> p_bar(k, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < k; ++c) p_bar[c] += inv_2b * (p(i, c) + p_prime(i, c));

    double ce = 0.0;
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            if (teacher_q_prime(i, c) > 0.0) ce += -teacher_q_prime(i, c) * std::log(p(i, c));
            if (teacher_q(i, c) > 0.0) ce += -teacher_q(i, c) * std::log(p_prime(i, c));
        }
    ce *= inv_2b;

    double entropy = 0.0;
    for (double v : p_bar)
        if (v > 0.0) entropy += -v * std::log(v);

    out.mean_entropy = entropy;
    out.value = ce - xi * entropy;

    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            const double dH = (p_bar[c] > 0.0) ? -(std::log(p_bar[c]) + 1.0) : 0.0;
            out.dp(i, c) = inv_2b * (-teacher_q_prime(i, c) / p(i, c) - xi * dH);
            out.dp_prime(i, c) = inv_2b * (-teacher_q(i, c) / p_prime(i, c) - xi * dH);
        }
    return out;
}

ClsSupResult cls_loss_sup(const DenseMatrix& p, const std::vector<std::optional<int>>& labels) {
    const std::size_t b = p.rows(), k = p.cols();
    if (labels.size() != b) throw DimensionError("cls_loss_sup: labels length mismatch");

    ClsSupResult out;
    out.dp = DenseMatrix(b, k);
    std::size_t n = 0;
    for (const auto& l : labels)
        if (l) ++n;
    if (n == 0) {
        out.empty = true;
        return out;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < b; ++i) {
        if (!labels[i]) continue;
        const int y = *labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw ArgumentError("cls_loss_sup: label " + std::to_string(y) + " out of range");
        out.value += -inv_n * std::log(p(i, y));
        out.dp(i, y) = -inv_n / p(i, y);
    }
    return out;
}

std::map<std::uint16_t, std::vector<double>> pool_parts(const DenseMatrix& patch_features,
                                                        const std::vector<std::uint16_t>& labels) {
    if (labels.size() != patch_features.rows())
        throw DimensionError("pool_parts: label array length mismatch");
    std::map<std::uint16_t, std::pair<std::vector<double>, std::size_t>> acc;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0) continue;
        auto& slot = acc[labels[i]];
        if (slot.first.empty()) slot.first.assign(patch_features.cols(), 0.0);
        auto r = patch_features.row(i);
        for (std::size_t c = 0; c < r.size(); ++c) slot.first[c] += r[c];
        ++slot.second;
    }
    std::map<std::uint16_t, std::vector<double>> out;
    for (auto& [part, slot] : acc) {
        for (double& v : slot.first) v /= static_cast<double>(slot.second);
        out.emplace(part, std::move(slot.first));
    }
    return out;
}

PartLossResult part_contrastive(const DenseMatrix& h, const std::vector<PartKey>& keys,
                                double tau) {
    const std::size_t e = h.rows();
    if (keys.size() != e) throw DimensionError("part_contrastive: keys length mismatch");
    if (tau <= 0.0) throw ArgumentError("part_contrastive: tau must be positive");

    PartLossResult out;
    out.dh = DenseMatrix(e, h.cols());

    // Anchor terms: positives share group and part across different samples;
    // the denominator is everything else but the anchor.
    struct Anchor {
        std::size_t entry;
        std::vector<std::size_t> positives;
        std::vector<std::size_t> negatives;
    };
    std::map<std::size_t, std::vector<Anchor>> by_sample;
    for (std::size_t a = 0; a < e; ++a) {
        if (!keys[a].group) continue;
        Anchor anchor{a, {}, {}};
        for (std::size_t j = 0; j < e; ++j) {
            if (j == a) continue;
            const bool positive = keys[j].group && *keys[j].group == *keys[a].group &&
                                  keys[j].part == keys[a].part &&
                                  keys[j].sample != keys[a].sample;
            if (positive)
                anchor.positives.push_back(j);
            else
                anchor.negatives.push_back(j);
        }
        if (anchor.positives.empty() || anchor.negatives.empty()) continue;
        by_sample[keys[a].sample].push_back(std::move(anchor));
    }
    if (by_sample.empty()) {
        out.empty = true;
        return out;
    }

    const DenseMatrix s = gram(h, h);
    DenseMatrix w(e, e);
    const double inv_samples = 1.0 / static_cast<double>(by_sample.size());
    std::vector<double> logits(e);
    for (const auto& [sample, anchors] : by_sample) {
        const double w_sample = inv_samples / static_cast<double>(anchors.size());
        for (const auto& anchor : anchors) {
            const std::size_t a = anchor.entry;
            for (std::size_t j = 0; j < e; ++j) logits[j] = s(a, j) / tau;
            const double lse = log_sum_exp(logits, anchor.negatives);
            const double inv_p = 1.0 / static_cast<double>(anchor.positives.size());
            for (std::size_t q : anchor.positives) {
                out.value += w_sample * inv_p * (-logits[q] + lse);
                w(a, q) += -w_sample * inv_p / tau;
            }
            for (std::size_t j : anchor.negatives)
                w(a, j) += w_sample * std::exp(logits[j] - lse) / tau;
        }
    }
    DenseMatrix dh2(e, h.cols());
    accumulate_sim_grads(w, h, h, out.dh, dh2);
    for (std::size_t i = 0; i < out.dh.data().size(); ++i) out.dh.data()[i] += dh2.data()[i];
    return out;
}

PartLossResult part_contrastive_sup(const DenseMatrix& h, const std::vector<PartKey>& keys,
                                    double tau) {
    return part_contrastive(h, keys, tau);
}

PartLossResult part_contrastive_unsup(const DenseMatrix& h, std::vector<PartKey> keys,
                                      const std::vector<double>& confidence, double threshold,
                                      double tau) {
    for (auto& key : keys) {
        if (!key.group) continue;
        if (key.sample >= confidence.size())
            throw ArgumentError("part_contrastive_unsup: confidence missing for sample " +
                                std::to_string(key.sample));
        if (confidence[key.sample] < threshold) key.group.reset();
    }
    return part_contrastive(h, keys, tau);
}

}  // namespace partco
