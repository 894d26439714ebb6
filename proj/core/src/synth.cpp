#include "partco/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "partco/rng.hpp"

namespace partco {

namespace {

std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(d);
    for (double& x : v) x = gauss(rng);
    normalize_inplace(v);
    return v;
}

// Unit vector orthogonal to u.
std::vector<double> random_unit_perp(const std::vector<double>& u, std::mt19937_64& rng) {
    std::vector<double> v = random_unit(u.size(), rng);
    const double proj = dot(std::span<const double>(v), std::span<const double>(u));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * u[i];
    normalize_inplace(v);
    return v;
}

// Mutually orthonormal unit vectors in u-perp: pairwise distance is exactly
// sqrt(2), so offset spreads stay bounded (no antipodal pairs).
std::vector<std::vector<double>> orthonormal_directions(std::size_t count,
                                                        const std::vector<double>& u,
                                                        std::mt19937_64& rng) {
    std::vector<std::vector<double>> out;
    while (out.size() < count) {
        std::vector<double> v = random_unit_perp(u, rng);
        for (const auto& prev : out) {
            const double proj = dot(std::span<const double>(v), std::span<const double>(prev));
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * prev[i];
        }
        const double n = norm2(v);
        if (n < 1e-6) continue;  // rare near-dependence, redraw
        for (double& x : v) x /= n;
        out.push_back(std::move(v));
    }
    return out;
}

// Farthest-point sampling from a candidate pool of unit vectors in u-perp;
// gives a separation lower bound that random draws do not.
std::vector<std::vector<double>> fps_directions(std::size_t count, const std::vector<double>& u,
                                                std::mt19937_64& rng) {
    constexpr std::size_t kPool = 256;
    std::vector<std::vector<double>> pool(kPool);
    for (auto& c : pool) c = random_unit_perp(u, rng);

    std::vector<std::vector<double>> chosen;
    std::vector<double> min_d2(kPool, 1e300);
    std::size_t next = 0;
    for (std::size_t k = 0; k < count; ++k) {
        chosen.push_back(pool[next]);
        for (std::size_t i = 0; i < kPool; ++i) {
            const double d2 = squared_distance(std::span<const double>(pool[i]),
                                               std::span<const double>(chosen.back()));
            min_d2[i] = std::min(min_d2[i], d2);
        }
        next = static_cast<std::size_t>(
            std::max_element(min_d2.begin(), min_d2.end()) - min_d2.begin());
    }
    return chosen;
}

}  // namespace

void SynthConfig::validate() const {
    if (num_classes == 0 || images_per_class == 0 || grid == 0 || dim < 4)
        throw ArgumentError("SynthConfig: degenerate sizes");
    if (old_classes > num_classes)
        throw ArgumentError("SynthConfig: old_classes exceeds num_classes");
    if (parts_per_class == 0 || parts_per_class > part_vocab_size)
        throw ArgumentError("SynthConfig: parts_per_class must be in [1, part_vocab_size]");
    if (subparts_per_part == 0) throw ArgumentError("SynthConfig: subparts_per_part must be >= 1");
    if (occlusion_prob < 0.0 || occlusion_prob > 1.0)
        throw ArgumentError("SynthConfig: occlusion_prob outside [0,1]");
    if (foreground_fraction <= 0.0 || foreground_fraction > 0.8)
        throw ArgumentError("SynthConfig: foreground_fraction outside (0, 0.8]");
    if (noise_sigma < 0.0 || scale_jitter < 0.0 || scale_jitter >= 1.0)
        throw ArgumentError("SynthConfig: bad noise/jitter");

    const double base = static_cast<double>(grid) *
                        std::sqrt(foreground_fraction / static_cast<double>(parts_per_class));
    const std::size_t base_side = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base)));
    if (parts_per_class * base_side * base_side > grid * grid)
        throw ArgumentError("SynthConfig: too many parts for grid (infeasible geometry)");
}

SynthOutput generate(const SynthConfig& config) {
    config.validate();
    const std::size_t n_img = config.num_classes * config.images_per_class;
    const std::size_t n_patch = config.grid * config.grid;
    const std::size_t d = config.dim;

    std::mt19937_64 rng = make_rng(mix_seed(config.seed, 0x73796e7468ULL));
    const std::vector<double> u = random_unit(d, rng);
    const auto protos = fps_directions(config.part_vocab_size, u, rng);

    // Subpart offsets per part; a single subpart means no substructure.
    std::vector<std::vector<std::vector<double>>> subs(config.part_vocab_size);
    for (std::size_t p = 0; p < config.part_vocab_size; ++p) {
        if (config.subparts_per_part == 1) {
            subs[p] = {std::vector<double>(d, 0.0)};
        } else {
            subs[p] = orthonormal_directions(config.subparts_per_part, u, rng);
        }
    }
    std::vector<std::vector<double>> class_offsets(config.num_classes);
    for (auto& off : class_offsets) off = random_unit_perp(u, rng);

    // Class composition: superclasses own disjoint chunks of the vocabulary;
    // classes spread across superclasses so Old and New share parts.
    const std::size_t n_super = std::max<std::size_t>(
        1, config.part_vocab_size / config.parts_per_class);
    auto class_parts = [&](std::size_t y) {
        std::vector<std::size_t> parts(config.parts_per_class);
        const std::size_t super = y % n_super;
        for (std::size_t j = 0; j < config.parts_per_class; ++j)
            parts[j] = (super * config.parts_per_class + j) % config.part_vocab_size;
        return parts;
    };
    auto class_subpart = [&](std::size_t y) { return (y / n_super) % config.subparts_per_part; };

    const double base = static_cast<double>(config.grid) *
                        std::sqrt(config.foreground_fraction /
                                  static_cast<double>(config.parts_per_class));
    const std::size_t base_side =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base)));
    const std::size_t max_side = std::max<std::size_t>(
        base_side, static_cast<std::size_t>(std::floor(
                       std::sqrt(0.8 * static_cast<double>(n_patch) /
                                 static_cast<double>(config.parts_per_class)))));

    SynthOutput out;
    out.features = FeatureSet(n_img, n_patch, d);
    out.truth.class_ids.resize(n_img);
    out.truth.part_ids.assign(n_img * n_patch, 0);
    out.truth.subpart_ids.assign(n_img * n_patch, 0);
    out.truth.part_vocab = config.part_vocab_size;
    out.truth.subpart_vocab = config.part_vocab_size * config.subparts_per_part;

    std::size_t img = 0;
    for (std::size_t y = 0; y < config.num_classes; ++y) {
        const auto parts = class_parts(y);
        const std::size_t sub_idx = class_subpart(y);
        for (std::size_t rep = 0; rep < config.images_per_class; ++rep, ++img) {
            std::mt19937_64 img_rng = make_rng(mix_seed(config.seed, 0x696d67ULL, img));
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            std::normal_distribution<double> gauss(0.0, 1.0);

            out.truth.class_ids[img] = static_cast<int>(y);

            const double scale = 1.0 + config.scale_jitter * (2.0 * uni(img_rng) - 1.0);
            std::size_t side = static_cast<std::size_t>(
                std::lround(static_cast<double>(base_side) * scale));
            side = std::clamp<std::size_t>(side, 1, std::min(max_side, config.grid));

            std::vector<std::uint8_t> occupied(n_patch, 0);
            for (std::size_t part : parts) {
                const bool occluded = uni(img_rng) < config.occlusion_prob;
                if (occluded) continue;
                // Random non-overlapping placement; shrink on persistent failure.
                std::size_t use_side = side;
                bool placed = false;
                while (!placed && use_side >= 1) {
                    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
                        std::uniform_int_distribution<std::size_t> pos(0, config.grid - use_side);
                        const std::size_t r0 = pos(img_rng);
                        const std::size_t c0 = pos(img_rng);
                        bool clash = false;
                        for (std::size_t r = r0; r < r0 + use_side && !clash; ++r)
                            for (std::size_t c = c0; c < c0 + use_side && !clash; ++c)
                                if (occupied[r * config.grid + c]) clash = true;
                        if (clash) continue;
                        placed = true;
                        for (std::size_t r = r0; r < r0 + use_side; ++r)
                            for (std::size_t c = c0; c < c0 + use_side; ++c) {
                                const std::size_t patch = r * config.grid + c;
                                occupied[patch] = 1;
                                out.truth.part_ids[img * n_patch + patch] =
                                    static_cast<std::uint16_t>(part + 1);
                                out.truth.subpart_ids[img * n_patch + patch] =
                                    static_cast<std::uint16_t>(
                                        part * config.subparts_per_part + sub_idx + 1);
                            }
                    }
                    if (!placed) --use_side;
                }
                if (!placed)
                    throw ArgumentError("generate: could not place part blocks (grid too small)");
            }

            for (std::size_t patch = 0; patch < n_patch; ++patch) {
                auto feat = out.features.patch(img, patch);
                const std::uint16_t part = out.truth.part_ids[img * n_patch + patch];
                if (part > 0) {
                    const auto& proto = protos[part - 1];
                    const auto& sub = subs[part - 1][sub_idx % subs[part - 1].size()];
                    const auto& off = class_offsets[y];
                    for (std::size_t j = 0; j < d; ++j)
                        feat[j] = config.object_strength * u[j] + proto[j] +
                                  config.subpart_scale * sub[j] +
                                  config.class_offset_scale * off[j];
                }
                if (config.noise_sigma > 0.0)
                    for (std::size_t j = 0; j < d; ++j)
                        feat[j] += config.noise_sigma * gauss(img_rng);
            }
        }
    }

    // 50% of each old class's images labeled, the rest (and all new-class
    // images) unlabeled.
    for (std::size_t i = 0; i < n_img; ++i) {
        ManifestEntry e;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img_%05zu", i);
        e.image_id = buf;
        e.class_id = out.truth.class_ids[i];
        const std::size_t y = static_cast<std::size_t>(e.class_id);
        const std::size_t rep = i % config.images_per_class;
        e.labeled = y < config.old_classes && rep < config.images_per_class / 2;
        out.manifest.entries.push_back(std::move(e));
    }
    out.manifest.finalize();
    return out;
}

SynthConfig preset(const std::string& name) {
    SynthConfig c;
    if (name == "fine_grained") {
        c.num_classes = 20;
        c.old_classes = 10;
        c.images_per_class = 30;
        c.parts_per_class = 4;
        c.part_vocab_size = 4;  // full overlap: every class carries every part
        c.subparts_per_part = 2;
        c.subpart_scale = 0.1;  // subtle substructure
        c.class_offset_scale = 0.25;
        c.noise_sigma = 0.25;
        c.occlusion_prob = 0.2;
        c.scale_jitter = 0.25;
        return c;
    }
    if (name == "generic") {
        c.num_classes = 12;
        c.old_classes = 6;
        c.images_per_class = 25;
        c.parts_per_class = 3;
        c.part_vocab_size = 9;  // three superclasses with disjoint parts
        c.subparts_per_part = 4;  // one subpart per class within a superclass
        c.subpart_scale = 0.38;  // strong substructure carries the class signal
        c.class_offset_scale = 0.04;
        c.noise_sigma = 0.12;
        c.occlusion_prob = 0.1;
        c.scale_jitter = 0.25;
        return c;
    }
    throw ArgumentError("preset: unknown name '" + name + "' (fine_grained|generic)");
}

PartLabelStore truth_to_store(const PlantedTruth& truth, std::size_t num_images,
                              std::size_t patches_per_image) {
    PartLabelStore store;
    store.order = LabelOrder::Both;
    store.num_images = static_cast<std::uint32_t>(num_images);
    store.patches_per_image = static_cast<std::uint32_t>(patches_per_image);

    PartLevel first;
    first.order = 1;
    first.label_count = static_cast<std::uint32_t>(truth.part_vocab);
    first.centroids = DenseMatrix(truth.part_vocab, 0);
    first.labels = truth.part_ids;

    PartLevel second;
    second.order = 2;
    second.label_count = static_cast<std::uint32_t>(truth.subpart_vocab);
    second.centroids = DenseMatrix(truth.subpart_vocab, 0);
    second.labels = truth.subpart_ids;
    const std::size_t per_part = truth.subpart_vocab / std::max<std::size_t>(1, truth.part_vocab);
    for (std::size_t s = 0; s < truth.subpart_vocab; ++s)
        second.parent_of.push_back(static_cast<std::uint32_t>(s / per_part + 1));

    store.levels.push_back(std::move(first));
    store.levels.push_back(std::move(second));
    return store;
}

}  // namespace partco
