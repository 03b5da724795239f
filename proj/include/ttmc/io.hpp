#pragma once

#include "ttmc/tt.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttmc {

// TTF1 binary layout: magic "TTF1", little-endian u64 d, u64 modes[d],
// u64 ranks[d+1], then the cores in order k = 1..d, each stored as f64 LE with
// index order (left rank slowest, mode middle, right rank fastest).
// Round-trips are bit-exact.

namespace detail {

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& buf, std::size_t& pos) {
    if (pos + 8 > buf.size()) throw std::runtime_error("TTF1: truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
             << (8 * i);
    pos += 8;
    return v;
}

inline void put_f64(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}

inline double get_f64(const std::string& buf, std::size_t& pos) {
    const std::uint64_t v = get_u64(buf, pos);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace detail

inline std::string ttf1_serialize(const TensorTrain& x) {
    std::string buf = "TTF1";
    detail::put_u64(buf, static_cast<std::uint64_t>(x.d()));
    for (Index m : x.modes()) detail::put_u64(buf, static_cast<std::uint64_t>(m));
    for (Index r : x.ranks()) detail::put_u64(buf, static_cast<std::uint64_t>(r));
    for (Index k = 0; k < x.d(); ++k) {
        const Index rl = x.rank(k), n = x.mode(k), rr = x.rank(k + 1);
        for (Index a = 0; a < rl; ++a)
            for (Index i = 0; i < n; ++i)
                for (Index b = 0; b < rr; ++b)
                    detail::put_f64(buf, x.core(k)[static_cast<std::size_t>(i)](a, b));
    }
    return buf;
}

inline TensorTrain ttf1_deserialize(const std::string& buf) {
    if (buf.size() < 4 || buf.compare(0, 4, "TTF1") != 0)
        throw std::runtime_error("TTF1: bad magic");
    std::size_t pos = 4;
    const Index d = static_cast<Index>(detail::get_u64(buf, pos));
    if (d < 1 || d > 65536) throw std::runtime_error("TTF1: implausible dimension count");
    std::vector<Index> modes(static_cast<std::size_t>(d));
    for (Index& m : modes) m = static_cast<Index>(detail::get_u64(buf, pos));
    std::vector<Index> ranks(static_cast<std::size_t>(d) + 1);
    for (Index& r : ranks) r = static_cast<Index>(detail::get_u64(buf, pos));
    std::vector<std::vector<Matrix>> cores(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        const Index rl = ranks[static_cast<std::size_t>(k)], n = modes[static_cast<std::size_t>(k)],
                    rr = ranks[static_cast<std::size_t>(k) + 1];
        cores[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(n), Matrix::Zero(rl, rr));
        for (Index a = 0; a < rl; ++a)
            for (Index i = 0; i < n; ++i)
                for (Index b = 0; b < rr; ++b)
                    cores[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)](a, b) =
                        detail::get_f64(buf, pos);
    }
    if (pos != buf.size()) throw std::runtime_error("TTF1: trailing bytes");
    return TensorTrain::from_cores(std::move(cores));
}

inline void ttf1_save(const TensorTrain& x, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("TTF1: cannot open " + path + " for writing");
    const std::string buf = ttf1_serialize(x);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("TTF1: write failed for " + path);
}

inline TensorTrain ttf1_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("TTF1: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ttf1_deserialize(buf);
}

/// FNV-1a 64-bit checksum of the TTF1 byte stream; solution fingerprints in
/// reports use this.
inline std::uint64_t ttf1_checksum(const TensorTrain& x) {
    const std::string buf = ttf1_serialize(x);
    std::uint64_t h = 1469598103934665603ull;
    for (char c : buf) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ttmc
