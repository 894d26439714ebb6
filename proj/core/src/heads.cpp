#include "partco/heads.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "partco/errors.hpp"
#include "partco/rng.hpp"

namespace partco {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

namespace {

LinearLayer make_layer(std::size_t out, std::size_t in, std::mt19937_64& rng) {
    LinearLayer l;
    l.w = DenseMatrix(out, in);
    l.b.assign(out, 0.0);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    for (double& v : l.w.data()) v = dist(rng);
    return l;
}

// y = x W^T + b for row-major batches.
DenseMatrix linear_forward(const DenseMatrix& x, const LinearLayer& l) {
    const std::size_t b = x.rows(), in = l.w.cols(), out = l.w.rows();
    DenseMatrix y(b, out);
    for (std::size_t i = 0; i < b; ++i) {
        auto xi = x.row(i);
        auto yi = y.row(i);
        for (std::size_t o = 0; o < out; ++o) yi[o] = l.b[o];
        for (std::size_t j = 0; j < in; ++j) {
            const double xj = xi[j];
            if (xj == 0.0) continue;
            for (std::size_t o = 0; o < out; ++o) yi[o] += l.w(o, j) * xj;
        }
    }
    return y;
}

// Accumulates dW += dY^T X and db += column sums of dY; returns dX = dY W.
void linear_backward(const DenseMatrix& x, const LinearLayer& l, const DenseMatrix& dy,
                     LinearLayer& grads, DenseMatrix* dx) {
    const std::size_t b = x.rows(), in = l.w.cols(), out = l.w.rows();
    for (std::size_t i = 0; i < b; ++i) {
        auto dyi = dy.row(i);
        auto xi = x.row(i);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dyi[o];
            if (g == 0.0) continue;
            grads.b[o] += g;
            for (std::size_t j = 0; j < in; ++j) grads.w(o, j) += g * xi[j];
        }
    }
    if (dx) {
        *dx = DenseMatrix(b, in);
        for (std::size_t i = 0; i < b; ++i) {
            auto dyi = dy.row(i);
            auto dxi = dx->row(i);
            for (std::size_t o = 0; o < out; ++o) {
                const double g = dyi[o];
                if (g == 0.0) continue;
                for (std::size_t j = 0; j < in; ++j) dxi[j] += g * l.w(o, j);
            }
        }
    }
}

DenseMatrix apply_silu(const DenseMatrix& x) {
    DenseMatrix y = x;
    for (double& v : y.data()) v = silu(v);
    return y;
}

}  // namespace

Mlp Mlp::make(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed);
    Mlp m;
    m.l1 = make_layer(hidden, in, rng);
    m.l2 = make_layer(hidden, hidden, rng);
    m.l3 = make_layer(out, hidden, rng);
    return m;
}

Mlp Mlp::zeros_like(const Mlp& other) {
    Mlp m;
    m.l1 = {DenseMatrix(other.l1.w.rows(), other.l1.w.cols()),
            std::vector<double>(other.l1.b.size(), 0.0)};
    m.l2 = {DenseMatrix(other.l2.w.rows(), other.l2.w.cols()),
            std::vector<double>(other.l2.b.size(), 0.0)};
    m.l3 = {DenseMatrix(other.l3.w.rows(), other.l3.w.cols()),
            std::vector<double>(other.l3.b.size(), 0.0)};
    return m;
}

Mlp::Cache Mlp::forward(const DenseMatrix& x) const {
    Cache c;
    c.input = x;
    c.pre1 = linear_forward(x, l1);
    c.act1 = apply_silu(c.pre1);
    c.pre2 = linear_forward(c.act1, l2);
    c.act2 = apply_silu(c.pre2);
    c.output = linear_forward(c.act2, l3);
    return c;
}

void Mlp::backward(const Cache& cache, const DenseMatrix& dout, Mlp& grads,
                   DenseMatrix* dinput) const {
    DenseMatrix dact2;
    linear_backward(cache.act2, l3, dout, grads.l3, &dact2);
    DenseMatrix dpre2 = dact2;
    for (std::size_t i = 0; i < dpre2.data().size(); ++i)
        dpre2.data()[i] *= silu_derivative(cache.pre2.data()[i]);

    DenseMatrix dact1;
    linear_backward(cache.act1, l2, dpre2, grads.l2, &dact1);
    DenseMatrix dpre1 = dact1;
    for (std::size_t i = 0; i < dpre1.data().size(); ++i)
        dpre1.data()[i] *= silu_derivative(cache.pre1.data()[i]);

    linear_backward(cache.input, l1, dpre1, grads.l1, dinput);
}

DenseMatrix TrunkAdapter::forward(const DenseMatrix& x) const {
    const std::size_t b = x.rows(), d = w.rows();
    DenseMatrix y = x;
    for (std::size_t i = 0; i < b; ++i) {
        auto xi = x.row(i);
        auto yi = y.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double xj = xi[j];
            if (xj == 0.0) continue;
            for (std::size_t o = 0; o < d; ++o) yi[o] += w(o, j) * xj;
        }
    }
    return y;
}

void TrunkAdapter::backward(const DenseMatrix& x, const DenseMatrix& dy, TrunkAdapter& grads,
                            DenseMatrix* dinput) const {
    const std::size_t b = x.rows(), d = w.rows();
    for (std::size_t i = 0; i < b; ++i) {
        auto xi = x.row(i);
        auto dyi = dy.row(i);
        for (std::size_t o = 0; o < d; ++o) {
            const double g = dyi[o];
            if (g == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) grads.w(o, j) += g * xi[j];
        }
    }
    if (dinput) {
        *dinput = dy;
        for (std::size_t i = 0; i < b; ++i) {
            auto dyi = dy.row(i);
            auto dxi = dinput->row(i);
            for (std::size_t o = 0; o < d; ++o) {
                const double g = dyi[o];
                if (g == 0.0) continue;
                for (std::size_t j = 0; j < d; ++j) dxi[j] += g * w(o, j);
            }
        }
    }
}

HeadParams HeadParams::make(std::size_t feature_dim, std::size_t rep_dim, std::size_t part_dim,
                            std::size_t num_classes, std::uint64_t seed) {
    HeadParams p;
    p.trunk = TrunkAdapter::make(feature_dim);
    p.psi = Mlp::make(feature_dim, 2 * feature_dim, rep_dim, mix_seed(seed, 1));
    p.psi_p = Mlp::make(feature_dim, 2 * feature_dim, part_dim, mix_seed(seed, 2));
    p.prototypes = DenseMatrix(num_classes, feature_dim);
    std::mt19937_64 rng = make_rng(mix_seed(seed, 3));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : p.prototypes.data()) v = dist(rng);
    p.renormalize_prototypes();
    return p;
}

void HeadParams::renormalize_prototypes() {
    for (std::size_t k = 0; k < prototypes.rows(); ++k) normalize_inplace(prototypes.row(k));
}

namespace {

template <typename Ref, typename Params>
std::vector<Ref> enumerate_tensors(Params& p) {
    std::vector<Ref> t;
    auto add = [&](const std::string& name, auto& m) {
        t.push_back(Ref{name, m.rows(), m.cols(), m.data().data()});
    };
    auto add_vec = [&](const std::string& name, auto& v) {
        t.push_back(Ref{name, 1, v.size(), v.data()});
    };
    add("trunk.w", p.trunk.w);
    add("psi.l1.w", p.psi.l1.w);
    add_vec("psi.l1.b", p.psi.l1.b);
    add("psi.l2.w", p.psi.l2.w);
    add_vec("psi.l2.b", p.psi.l2.b);
    add("psi.l3.w", p.psi.l3.w);
    add_vec("psi.l3.b", p.psi.l3.b);
    add("psi_p.l1.w", p.psi_p.l1.w);
    add_vec("psi_p.l1.b", p.psi_p.l1.b);
    add("psi_p.l2.w", p.psi_p.l2.w);
    add_vec("psi_p.l2.b", p.psi_p.l2.b);
    add("psi_p.l3.w", p.psi_p.l3.w);
    add_vec("psi_p.l3.b", p.psi_p.l3.b);
    add("prototypes", p.prototypes);
    return t;
}

}  // namespace

std::vector<HeadParams::TensorRef> HeadParams::tensors() {
    return enumerate_tensors<TensorRef>(*this);
}

std::vector<HeadParams::ConstTensorRef> HeadParams::tensors() const {
    return enumerate_tensors<ConstTensorRef>(*this);
}

bool HeadParams::all_finite() const {
    for (const auto& t : tensors())
        for (std::size_t i = 0; i < t.rows * t.cols; ++i)
            if (!std::isfinite(t.data[i])) return false;
    return true;
}

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, std::size_t& offset, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw FormatError(std::string("truncated while reading ") + what, offset);
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is, std::size_t& offset, const char* what) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8)
        throw FormatError(std::string("truncated while reading ") + what, offset);
    offset += 8;
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_checkpoint(const HeadParams& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("write_checkpoint: cannot open " + path.string());
    const auto tensors = params.tensors();
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put_u32(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rows));
        put_u32(os, static_cast<std::uint32_t>(t.cols));
    }
    for (const auto& t : tensors)
        for (std::size_t i = 0; i < t.rows * t.cols; ++i) put_f64(os, t.data[i]);
    if (!os) throw IoError("write_checkpoint: write failed for " + path.string());
}

HeadParams read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_checkpoint: cannot open " + path.string());

    std::size_t offset = 0;
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4) throw FormatError("truncated magic", offset);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected PCKP", 0);
    offset += 4;
    const std::uint32_t version = get_u32(is, offset, "version");
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version), offset - 4);

    struct Entry {
        std::string name;
        std::size_t rows, cols;
    };
    const std::uint32_t count = get_u32(is, offset, "tensor count");
    std::vector<Entry> table(count);
    for (auto& e : table) {
        const std::uint32_t len = get_u32(is, offset, "name length");
        e.name.resize(len);
        is.read(e.name.data(), len);
        if (is.gcount() != static_cast<std::streamsize>(len))
            throw FormatError("truncated tensor name", offset);
        offset += len;
        e.rows = get_u32(is, offset, "rows");
        e.cols = get_u32(is, offset, "cols");
    }

    // Shapes drive reconstruction; the layout table is authoritative.
    auto shape_of = [&](const std::string& name) -> Entry* {
        for (auto& e : table)
            if (e.name == name) return &e;
        throw FormatError("checkpoint missing tensor '" + name + "'");
    };
    const Entry* trunk = shape_of("trunk.w");
    const Entry* psi_out = shape_of("psi.l3.w");
    const Entry* psip_out = shape_of("psi_p.l3.w");
    const Entry* protos = shape_of("prototypes");

    HeadParams params = HeadParams::make(trunk->rows, psi_out->rows, psip_out->rows,
                                         protos->rows, /*seed=*/0);
    auto refs = params.tensors();
    for (const auto& e : table) {
        HeadParams::TensorRef* ref = nullptr;
        for (auto& r : refs)
            if (r.name == e.name) ref = &r;
        if (!ref) throw FormatError("unknown tensor '" + e.name + "' in checkpoint");
        if (ref->rows != e.rows || ref->cols != e.cols)
            throw FormatError("shape mismatch for tensor '" + e.name + "'");
        for (std::size_t i = 0; i < e.rows * e.cols; ++i)
            ref->data[i] = get_f64(is, offset, e.name.c_str());
    }
    return params;
}

DenseMatrix normalize_rows(const DenseMatrix& v) {
    DenseMatrix y = v;
    for (std::size_t i = 0; i < y.rows(); ++i) normalize_inplace(y.row(i));
    return y;
}

DenseMatrix normalize_rows_backward(const DenseMatrix& v, const DenseMatrix& y,
                                    const DenseMatrix& dy) {
    DenseMatrix dv(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.rows(); ++i) {
        const double n = norm2(v.row(i));
        if (n == 0.0) continue;
        const double proj = dot(y.row(i), dy.row(i));
        for (std::size_t j = 0; j < v.cols(); ++j)
            dv(i, j) = (dy(i, j) - y(i, j) * proj) / n;
    }
    return dv;
}

}  // namespace partco
