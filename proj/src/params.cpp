#include "dastgcn/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace dastgcn {

Param& ParamStore::create(const std::string& name, std::vector<int64_t> shape) {
    if (contains(name)) throw std::logic_error("duplicate parameter name: " + name);
    Param p;
    p.value = Tensor::zeros(shape);
    p.grad = Tensor::zeros(shape);
    p.moment1 = Tensor::zeros(shape);
    p.moment2 = Tensor::zeros(std::move(shape));
    return entries_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::create_uniform(const std::string& name, std::vector<int64_t> shape,
                                  double bound, std::mt19937_64& rng) {
    Param& p = create(name, std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = dist(rng);
    return p;
}

Param& ParamStore::get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
}

int64_t ParamStore::value_count() const {
    int64_t n = 0;
    for (const auto& [_, p] : entries_) n += p.value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [_, p] : entries_) p.grad.fill(0.0);
}

double ParamStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& [_, p] : entries_)
        for (int64_t i = 0; i < p.grad.numel(); ++i) sq += p.grad[i] * p.grad[i];
    return std::sqrt(sq);
}

void ParamStore::clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double factor = max_norm / norm;
    for (auto& [_, p] : entries_) p.grad.scale_inplace(factor);
}

void ParamStore::adam_step(const AdamConfig& cfg) {
    for (auto& [_, p] : entries_) {
        p.step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i];
            p.moment1[i] = cfg.beta1 * p.moment1[i] + (1.0 - cfg.beta1) * g;
            p.moment2[i] = cfg.beta2 * p.moment2[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = p.moment1[i] / bc1;
            const double v_hat = p.moment2[i] / bc2;
            p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
        p.grad.fill(0.0);
    }
}

namespace {

constexpr char kMagic[8] = {'D', 'A', 'S', 'T', 'G', 'C', 'N', '1'};

void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    write_u64(os, static_cast<uint64_t>(t.rank()));
    for (int64_t i = 0; i < t.rank(); ++i) write_u64(os, static_cast<uint64_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

Tensor read_tensor(std::istream& is) {
    const uint64_t rank = read_u64(is);
    std::vector<int64_t> shape(rank);
    for (uint64_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_u64(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& metadata_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u64(os, metadata_json.size());
    os.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
    write_u64(os, params.count());
    for (const auto& [name, p] : params) {
        write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, p.value);
        write_tensor(os, p.moment1);
        write_tensor(os, p.moment2);
        write_u64(os, static_cast<uint64_t>(p.step));
    }
    if (!os) throw std::runtime_error("short write on checkpoint: " + path);
}

std::string load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8] = {};
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointVersionMismatch("bad checkpoint magic in " + path +
                                        " (expected DASTGCN1)");
    const uint64_t meta_len = read_u64(is);
    std::string metadata(meta_len, '\0');
    is.read(metadata.data(), static_cast<std::streamsize>(meta_len));
    const uint64_t count = read_u64(is);
    for (uint64_t e = 0; e < count; ++e) {
        const uint64_t name_len = read_u64(is);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        Tensor value = read_tensor(is);
        Tensor m1 = read_tensor(is);
        Tensor m2 = read_tensor(is);
        const int64_t step = static_cast<int64_t>(read_u64(is));
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        Param& p = params.contains(name) ? params.get(name) : params.create(name, value.shape());
        if (!p.value.same_shape(value))
            throw CheckpointVersionMismatch("checkpoint entry '" + name + "' has shape " +
                                            value.shape_str() + ", model expects " +
                                            p.value.shape_str());
        p.value = std::move(value);
        p.moment1 = std::move(m1);
        p.moment2 = std::move(m2);
        p.step = step;
        p.grad = Tensor::zeros(p.value.shape());
    }
    return metadata;
}

}  // namespace dastgcn
