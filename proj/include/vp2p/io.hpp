#pragma once

#include <map>
#include <string>

#include "vp2p/denoiser.hpp"
#include "vp2p/inversion.hpp"
#include "vp2p/tensor.hpp"

namespace vp2p {

// Flat binary tensor interchange: magic "VP2P", u32 version, u32 rank,
// u64 dims[rank], then row-major f64 payload. All little-endian.
void write_tensor(const std::string& path, const Tensor& tensor);
Tensor read_tensor(const std::string& path);

// Model checkpoint: magic "VP2M", version, dims header, seed, then the
// parameter vector in declaration order.
void write_model(const std::string& path, const ToyT2SDenoiser& model);
ToyT2SDenoiser read_model(const std::string& path);

// Null-schedule checkpoint: magic "VP2N", version, mode flag, T, rows/cols,
// per-step payload offsets, then the embeddings.
void write_nulls(const std::string& path, const NullSchedule& nulls);
NullSchedule read_nulls(const std::string& path);

// Flat key=value config with typed access and unknown-key rejection.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // throws if any key was never read through a getter
    void reject_unknown_keys() const;

private:
    std::map<std::string, std::string> values_;
    mutable std::map<std::string, bool> touched_;
};

}  // namespace vp2p
