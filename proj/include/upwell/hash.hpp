#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace upwell {

// FNV-1a 64-bit. Used for parameter-group fingerprints, manifest cache keys
// and checkpoint integrity checks; not cryptographic.
class Fnv64 {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ull;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    template <typename T>
    void update_pod(const T& v) {
        update(&v, sizeof(T));
    }

    void update(const std::vector<double>& v) {
        if (!v.empty()) update(v.data(), v.size() * sizeof(double));
    }

    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

std::uint64_t hash_bytes(const void* data, std::size_t n);
std::uint64_t hash_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

}  // namespace upwell
