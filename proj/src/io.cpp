#include "vp2p/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vp2p {

namespace {

// this codebase assumes a little-endian host; asserted once at file open
void require_little_endian() {
    const uint32_t probe = 1;
    if (*reinterpret_cast<const uint8_t*>(&probe) != 1)
        throw std::runtime_error("tensor io: big-endian hosts are unsupported");
}

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error(std::string("tensor io: truncated file reading ") + what);
    return v;
}

void put_magic(std::ostream& out, const char magic[4]) { out.write(magic, 4); }

void check_magic(std::istream& in, const char magic[4], const std::string& path) {
    char buf[4];
    in.read(buf, 4);
    if (!in) throw std::runtime_error("tensor io: truncated file " + path);
    if (std::memcmp(buf, magic, 4) != 0)
        throw std::runtime_error("tensor io: bad magic in " + path);
}

constexpr uint32_t kVersion = 1;

}  // namespace

void write_tensor(const std::string& path, const Tensor& tensor) {
    require_little_endian();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_tensor: cannot open " + path);
    put_magic(out, "VP2P");
    put<uint32_t>(out, kVersion);
    put<uint32_t>(out, static_cast<uint32_t>(tensor.dims.size()));
    for (uint64_t d : tensor.dims) put<uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_tensor: write failed for " + path);
}

Tensor read_tensor(const std::string& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_tensor: cannot open " + path);
    check_magic(in, "VP2P", path);
    const uint32_t version = take<uint32_t>(in, "version");
    if (version != kVersion) throw std::runtime_error("read_tensor: unsupported version");
    const uint32_t rank = take<uint32_t>(in, "rank");
    if (rank > 16) throw std::runtime_error("read_tensor: implausible rank");
    Tensor t;
    t.dims.resize(rank);
    for (uint32_t i = 0; i < rank; ++i) t.dims[i] = take<uint64_t>(in, "dims");
    const uint64_t count = Tensor::element_count(t.dims);  // throws on overflow
    t.data.resize(count);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in || static_cast<uint64_t>(in.gcount()) != count * sizeof(double))
        throw std::runtime_error("read_tensor: truncated payload in " + path);
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("read_tensor: trailing bytes in " + path);
    return t;
}

void write_model(const std::string& path, const ToyT2SDenoiser& model) {
    require_little_endian();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_model: cannot open " + path);
    put_magic(out, "VP2M");
    put<uint32_t>(out, kVersion);
    put<uint32_t>(out, static_cast<uint32_t>(model.dims.channels));
    put<uint32_t>(out, static_cast<uint32_t>(model.dims.hidden));
    put<uint32_t>(out, static_cast<uint32_t>(model.dims.text_dim));
    put<uint32_t>(out, model.dims.temporal ? 1 : 0);
    put<uint32_t>(out, static_cast<uint32_t>(model.dims.max_timestep));
    put<uint64_t>(out, model.seed);
    put<uint64_t>(out, model.params.size());
    out.write(reinterpret_cast<const char*>(model.params.data()),
              static_cast<std::streamsize>(model.params.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_model: write failed for " + path);
}

ToyT2SDenoiser read_model(const std::string& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_model: cannot open " + path);
    check_magic(in, "VP2M", path);
    if (take<uint32_t>(in, "version") != kVersion)
        throw std::runtime_error("read_model: unsupported version");
    ToyT2SDenoiser m;
    m.dims.channels = static_cast<int>(take<uint32_t>(in, "channels"));
    m.dims.hidden = static_cast<int>(take<uint32_t>(in, "hidden"));
    m.dims.text_dim = static_cast<int>(take<uint32_t>(in, "text_dim"));
    m.dims.temporal = take<uint32_t>(in, "temporal") != 0;
    m.dims.max_timestep = static_cast<int>(take<uint32_t>(in, "max_timestep"));
    m.seed = take<uint64_t>(in, "seed");
    m.layout = make_param_layout(m.dims);
    const uint64_t count = take<uint64_t>(in, "param count");
    if (count != m.layout.total)
        throw std::runtime_error("read_model: parameter count does not match header dims");
    m.params.resize(count);
    in.read(reinterpret_cast<char*>(m.params.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("read_model: truncated payload in " + path);
    return m;
}

void write_nulls(const std::string& path, const NullSchedule& nulls) {
    require_little_endian();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_nulls: cannot open " + path);
    put_magic(out, "VP2N");
    put<uint32_t>(out, kVersion);
    put<uint32_t>(out, nulls.mode == NullSchedule::Mode::Shared ? 0 : 1);
    put<uint32_t>(out, static_cast<uint32_t>(nulls.num_steps));
    const auto& first = nulls.embeddings.at(0).at(0);
    put<uint32_t>(out, static_cast<uint32_t>(nulls.embeddings[0].size()));  // slots per step
    put<uint32_t>(out, static_cast<uint32_t>(first.rows()));
    put<uint32_t>(out, static_cast<uint32_t>(first.cols()));
    // per-step payload offsets (doubles from payload start)
    const uint64_t per_step = static_cast<uint64_t>(nulls.embeddings[0].size()) * first.size();
    for (int t = 0; t < nulls.num_steps; ++t) put<uint64_t>(out, per_step * t);
    for (const auto& slot : nulls.embeddings)
        for (const auto& e : slot)
            for (Eigen::Index r = 0; r < e.rows(); ++r)
                for (Eigen::Index c = 0; c < e.cols(); ++c) put<double>(out, e(r, c));
    if (!out) throw std::runtime_error("write_nulls: write failed for " + path);
}

NullSchedule read_nulls(const std::string& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_nulls: cannot open " + path);
    check_magic(in, "VP2N", path);
    if (take<uint32_t>(in, "version") != kVersion)
        throw std::runtime_error("read_nulls: unsupported version");
    NullSchedule n;
    n.mode = take<uint32_t>(in, "mode") == 0 ? NullSchedule::Mode::Shared
                                             : NullSchedule::Mode::PerFrame;
    n.num_steps = static_cast<int>(take<uint32_t>(in, "num_steps"));
    const uint32_t slots = take<uint32_t>(in, "slots");
    const uint32_t rows = take<uint32_t>(in, "rows");
    const uint32_t cols = take<uint32_t>(in, "cols");
    for (int t = 0; t < n.num_steps; ++t) take<uint64_t>(in, "offsets");
    n.embeddings.assign(n.num_steps, std::vector<PromptEmbedding>(
                                         slots, PromptEmbedding::Zero(rows, cols)));
    for (auto& slot : n.embeddings)
        for (auto& e : slot)
            for (uint32_t r = 0; r < rows; ++r)
                for (uint32_t c = 0; c < cols; ++c) e(r, c) = take<double>(in, "payload");
    return n;
}

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " is not key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config: empty key at line " + std::to_string(lineno));
        if (cfg.values_.count(key))
            throw std::runtime_error("config: duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    touched_[key] = true;
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long Config::get_int(const std::string& key, long fallback) const {
    touched_[key] = true;
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(it->second, &pos);
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' is not an integer");
    }
    if (pos != it->second.size())
        throw std::runtime_error("config: key '" + key + "' is not an integer");
    return v;
}

double Config::get_real(const std::string& key, double fallback) const {
    touched_[key] = true;
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &pos);
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' is not a number");
    }
    if (pos != it->second.size())
        throw std::runtime_error("config: key '" + key + "' is not a number");
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    touched_[key] = true;
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "1" || it->second == "true" || it->second == "on") return true;
    if (it->second == "0" || it->second == "false" || it->second == "off") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean");
}

void Config::reject_unknown_keys() const {
    for (const auto& [key, value] : values_)
        if (!touched_.count(key))
            throw std::runtime_error("config: unknown key '" + key + "'");
}

}  // namespace vp2p
