#include "upwell/hash.hpp"

#include <cstdio>
#include <fstream>

#include "upwell/errors.hpp"

namespace upwell {

std::uint64_t hash_bytes(const void* data, std::size_t n) {
    Fnv64 h;
    h.update(data, n);
    return h.digest();
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for hashing: " + path);
    Fnv64 h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.digest();
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace upwell
