#pragma once

// Binary dump of a steady state: grid, model parameters and snapshots.
// Layout (little endian as written by the host):
//   "SPCK" | u32 version | u32 endian tag | grid | params | u64 Ns |
//   Ns x (f64 time, N x c128 psi_plus, N x c128 psi_minus)

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinpump/quantum.hpp"

namespace spinpump {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Grid grid;
    ModelParams params;
    std::vector<SpinorField> snapshots;
    std::vector<double> times;
};

namespace detail {
template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint truncated");
    return v;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    if (c.snapshots.size() != c.times.size()) throw std::invalid_argument("checkpoint: snapshot/time count mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write("SPCK", 4);
    detail::put(os, kCheckpointVersion);
    detail::put(os, std::uint32_t{0x01020304});
    detail::put(os, c.grid.L);
    detail::put(os, static_cast<std::uint64_t>(c.grid.N));
    const ModelParams& p = c.params;
    for (double v : {p.a, p.A1, p.A2, p.T, p.m0, p.gamma, p.spin_norm, p.hbar, p.muB, p.phi_kick}) detail::put(os, v);
    detail::put(os, static_cast<std::int32_t>(p.sign == CouplingSign::Positive ? 1 : -1));
    detail::put(os, static_cast<std::uint64_t>(c.snapshots.size()));
    for (std::size_t k = 0; k < c.snapshots.size(); ++k) {
        if (c.snapshots[k].size() != c.grid.N) throw std::invalid_argument("checkpoint: snapshot length != N");
        detail::put(os, c.times[k]);
        for (int comp = 0; comp < 2; ++comp)
            os.write(reinterpret_cast<const char*>(c.snapshots[k].component(comp).data()),
                     static_cast<std::streamsize>(c.grid.N * sizeof(cplx)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SPCK", 4) != 0) throw std::runtime_error("not a checkpoint file: " + path);
    const auto version = detail::get<std::uint32_t>(is);
    if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    if (detail::get<std::uint32_t>(is) != 0x01020304u) throw std::runtime_error("checkpoint written with different byte order");
    Checkpoint c;
    c.grid.L = detail::get<double>(is);
    c.grid.N = static_cast<std::size_t>(detail::get<std::uint64_t>(is));
    ModelParams& p = c.params;
    for (double* v : {&p.a, &p.A1, &p.A2, &p.T, &p.m0, &p.gamma, &p.spin_norm, &p.hbar, &p.muB, &p.phi_kick})
        *v = detail::get<double>(is);
    p.sign = detail::get<std::int32_t>(is) == 1 ? CouplingSign::Positive : CouplingSign::Negative;
    c.grid.validate();
    const auto ns = detail::get<std::uint64_t>(is);
    if (ns > (1u << 20)) throw std::runtime_error("checkpoint snapshot count implausible");
    for (std::uint64_t k = 0; k < ns; ++k) {
        c.times.push_back(detail::get<double>(is));
        SpinorField f(c.grid.N);
        for (int comp = 0; comp < 2; ++comp) {
            is.read(reinterpret_cast<char*>(f.component(comp).data()), static_cast<std::streamsize>(c.grid.N * sizeof(cplx)));
            if (!is) throw std::runtime_error("checkpoint truncated");
        }
        c.snapshots.push_back(std::move(f));
    }
    return c;
}

}  // namespace spinpump
