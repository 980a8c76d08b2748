#include "livegraph/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace livegraph {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_i64(std::ostream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_mat(std::ostream& out, const Mat& m) {
    write_i64(out, m.rows());
    write_i64(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
}
void write_vec(std::ostream& out, const Vec& v) {
    write_i64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(sizeof(double) * v.size()));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
std::int64_t read_i64(std::istream& in) {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
std::string read_string(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}
Mat read_mat(std::istream& in) {
    const std::int64_t r = read_i64(in), c = read_i64(in);
    Mat m(r, c);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    return m;
}
Vec read_vec(std::istream& in) {
    const std::int64_t n = read_i64(in);
    Vec v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    write_u32(out, kCheckpointVersion);
    write_u32(out, kStateLayoutVersion);
    write_string(out, ckpt.config.serialize());

    const Model& m = ckpt.model;
    write_mat(out, m.kernel.Z);
    write_mat(out, m.kernel.M_proj);
    write_f64(out, m.kernel.b);
    write_mat(out, m.kernel.S0);
    write_f64(out, m.kernel.eta);
    write_f64(out, m.kernel.lambda1);
    write_f64(out, m.kernel.lambda2);
    write_u64(out, ckpt.kernel_version);

    write_mat(out, m.vae.W_enc);
    write_vec(out, m.vae.b_enc);
    write_f64(out, m.vae.beta);
    write_mat(out, m.vae.prior_proj);

    write_mat(out, m.policy.W1);
    write_vec(out, m.policy.b1);
    write_mat(out, m.policy.W2);
    write_vec(out, m.policy.b2);

    write_mat(out, m.marginal.A1);
    write_vec(out, m.marginal.c1);
    write_vec(out, m.marginal.A2);
    write_f64(out, m.marginal.c2);

    write_mat(out, m.priors.rows);
    write_u32(out, m.priors.source == PriorEmbeddingTable::Source::File ? 1 : 0);

    write_vec(out, ckpt.opt.m.size() ? ckpt.opt.m : Vec::Zero(0));
    write_vec(out, ckpt.opt.v.size() ? ckpt.opt.v : Vec::Zero(0));
    write_i64(out, ckpt.opt.step_count);
    write_f64(out, ckpt.opt.lr);
    write_f64(out, ckpt.opt.beta1);
    write_f64(out, ckpt.opt.beta2);
    write_f64(out, ckpt.opt.eps);
    write_f64(out, ckpt.opt.clip);
    if (!out) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8] = {};
    in.read(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw DataError("not a checkpoint file: " + path);
    const std::uint32_t fmt = read_u32(in);
    if (fmt != kCheckpointVersion)
        throw DataError("checkpoint format version " + std::to_string(fmt) + ", expected " +
                        std::to_string(kCheckpointVersion));
    const std::uint32_t layout = read_u32(in);
    if (layout != kStateLayoutVersion)
        throw DataError("meta-state layout version " + std::to_string(layout) + ", expected " +
                        std::to_string(kStateLayoutVersion));

    const RunConfig cfg = parse_config_text(read_string(in));
    Checkpoint ckpt(cfg);
    Model& m = ckpt.model;

    m.kernel.Z = read_mat(in);
    m.kernel.M_proj = read_mat(in);
    m.kernel.b = read_f64(in);
    m.kernel.S0 = read_mat(in);
    m.kernel.eta = read_f64(in);
    m.kernel.lambda1 = read_f64(in);
    m.kernel.lambda2 = read_f64(in);
    ckpt.kernel_version = read_u64(in);
    m.kernel.commit_external_update();

    m.vae.W_enc = read_mat(in);
    m.vae.b_enc = read_vec(in);
    m.vae.beta = read_f64(in);
    m.vae.prior_proj = read_mat(in);

    m.policy.W1 = read_mat(in);
    m.policy.b1 = read_vec(in);
    m.policy.W2 = read_mat(in);
    m.policy.b2 = read_vec(in);

    m.marginal.A1 = read_mat(in);
    m.marginal.c1 = read_vec(in);
    m.marginal.A2 = read_vec(in);
    m.marginal.c2 = read_f64(in);

    m.priors.rows = read_mat(in);
    m.priors.source = read_u32(in) == 1 ? PriorEmbeddingTable::Source::File
                                        : PriorEmbeddingTable::Source::Synthetic;

    ckpt.opt.m = read_vec(in);
    ckpt.opt.v = read_vec(in);
    ckpt.opt.step_count = read_i64(in);
    ckpt.opt.lr = read_f64(in);
    ckpt.opt.beta1 = read_f64(in);
    ckpt.opt.beta2 = read_f64(in);
    ckpt.opt.eps = read_f64(in);
    ckpt.opt.clip = read_f64(in);
    if (!in) throw DataError("checkpoint truncated: " + path);
    return ckpt;
}

}  // namespace livegraph
