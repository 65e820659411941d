#include "cada/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cada {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'A', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw ValidationError("checkpoint: truncated while reading " + what);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod<uint32_t>(os, uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& is, const std::string& what) {
    const uint32_t len = read_pod<uint32_t>(is, what);
    if (len > (1u << 20)) throw ValidationError("checkpoint: implausible string length in " + what);
    std::string s(len, '\0');
    if (!is.read(s.data(), len)) throw ValidationError("checkpoint: truncated " + what);
    return s;
}

}  // namespace

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t fnv1a_str(const std::string& s) { return fnv1a(s.data(), s.size()); }

void save_checkpoint(const std::string& path, const ParamRegistry& params,
                     uint64_t config_hash, const TrainState* train_state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    write_pod<uint64_t>(os, config_hash);

    const auto uniq = params.unique();
    const auto aliases = params.aliases();
    write_pod<uint32_t>(os, uint32_t(uniq.size()));
    write_pod<uint32_t>(os, uint32_t(aliases.size()));
    const uint8_t has_opt = train_state && train_state->optimizer ? 1 : 0;
    write_pod<uint8_t>(os, has_opt);

    for (const auto& p : uniq) {
        write_string(os, p.name);
        write_pod<uint32_t>(os, uint32_t(p.tensor.rows()));
        write_pod<uint32_t>(os, uint32_t(p.tensor.cols()));
        os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
                 std::streamsize(p.tensor.size() * sizeof(float)));
    }
    for (const auto& [alias, canonical] : aliases) {
        write_string(os, alias);
        write_string(os, canonical);
    }
    if (has_opt) {
        write_pod<int64_t>(os, train_state->step);
        auto& moments = train_state->optimizer->moments();
        for (const auto& p : uniq) {
            auto it = moments.find(p.tensor.node());
            std::vector<float> m(p.tensor.size(), 0.0f), v(p.tensor.size(), 0.0f);
            if (it != moments.end()) {
                m = it->second.m;
                v = it->second.v;
            }
            os.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size() * 4));
            os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
        }
    }
    if (!os) throw ValidationError("checkpoint: write to '" + path + "' failed");
}

int64_t load_checkpoint(const std::string& path, const ParamRegistry& params,
                        uint64_t expected_config_hash, AdamW* optimizer) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError("checkpoint: bad magic in '" + path + "'");
    const uint64_t hash = read_pod<uint64_t>(is, "config hash");
    if (hash != expected_config_hash)
        throw ValidationError("checkpoint: config hash mismatch (file " + std::to_string(hash) +
                              ", expected " + std::to_string(expected_config_hash) + ")");
    const uint32_t n_entries = read_pod<uint32_t>(is, "entry count");
    const uint32_t n_aliases = read_pod<uint32_t>(is, "alias count");
    const uint8_t has_opt = read_pod<uint8_t>(is, "optimizer flag");

    const auto uniq = params.unique();
    if (uniq.size() != n_entries)
        throw ValidationError("checkpoint: file has " + std::to_string(n_entries) +
                              " entries, model has " + std::to_string(uniq.size()));

    for (uint32_t e = 0; e < n_entries; ++e) {
        const std::string name = read_string(is, "entry name");
        const uint32_t rows = read_pod<uint32_t>(is, "rows");
        const uint32_t cols = read_pod<uint32_t>(is, "cols");
        const Parameter* found = params.find(name);
        if (!found) throw ValidationError("checkpoint: unknown parameter '" + name + "'");
        Parameter p = *found;  // non-const handle to the shared storage
        if (uint32_t(p.tensor.rows()) != rows || uint32_t(p.tensor.cols()) != cols)
            throw ValidationError("checkpoint: shape mismatch for '" + name + "'");
        if (!is.read(reinterpret_cast<char*>(p.tensor.data().data()),
                     std::streamsize(p.tensor.size() * sizeof(float))))
            throw ValidationError("checkpoint: truncated payload for '" + name + "'");
    }
    for (uint32_t a = 0; a < n_aliases; ++a) {
        const std::string alias = read_string(is, "alias");
        const std::string canonical = read_string(is, "alias target");
        const Parameter* pa = params.find(alias);
        const Parameter* pc = params.find(canonical);
        if (!pa || !pc || pa->tensor.node() != pc->tensor.node())
            throw ValidationError("checkpoint: alias '" + alias + "' -> '" + canonical +
                                  "' does not match model sharing");
    }
    int64_t step = 0;
    if (has_opt && optimizer) {
        step = read_pod<int64_t>(is, "step counter");
        optimizer->set_step_count(step);
        for (const auto& p : uniq) {
            auto& mo = optimizer->moments()[p.tensor.node()];
            mo.m.resize(p.tensor.size());
            mo.v.resize(p.tensor.size());
            if (!is.read(reinterpret_cast<char*>(mo.m.data()), std::streamsize(mo.m.size() * 4)) ||
                !is.read(reinterpret_cast<char*>(mo.v.data()), std::streamsize(mo.v.size() * 4)))
                throw ValidationError("checkpoint: truncated optimizer state for '" + p.name + "'");
        }
    }
    return step;
}

uint64_t checkpoint_config_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError("checkpoint: bad magic in '" + path + "'");
    return read_pod<uint64_t>(is, "config hash");
}

}  // namespace cada
