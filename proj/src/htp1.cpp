#include "htp/htp1.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace htp {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'T', 'P', '1'};
constexpr std::uint32_t kMaxRank = 16;

template <typename U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    os.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> buf{};
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
        throw IoError("HTP1: truncated stream");
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(buf[i]) << (8 * i);
    }
    return v;
}

}  // namespace

std::uint64_t HostTensor::element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_htp1(std::ostream& os, const HostTensor& t) {
    if (t.values.size() != t.element_count()) {
        throw IoError("HTP1: value count " + std::to_string(t.values.size()) + " does not match dims");
    }
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(os, d);
    for (double v : t.values) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw IoError("HTP1: write failed");
}

HostTensor read_htp1(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
        throw IoError("HTP1: bad magic");
    }
    const auto rank = get_le<std::uint32_t>(is);
    if (rank > kMaxRank) throw IoError("HTP1: rank " + std::to_string(rank) + " too large");
    HostTensor t;
    t.dims.resize(rank);
    for (auto& d : t.dims) d = get_le<std::uint64_t>(is);
    const std::uint64_t n = t.element_count();
    if (n > (std::uint64_t{1} << 34)) throw IoError("HTP1: implausible element count");
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    return t;
}

void save_htp1(const std::filesystem::path& path, const HostTensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_htp1(os, t);
}

HostTensor load_htp1(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_htp1(is);
}

std::string encode_htp1(const HostTensor& t) {
    std::ostringstream os(std::ios::binary);
    write_htp1(os, t);
    return os.str();
}

HostTensor decode_htp1(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return read_htp1(is);
}

HostTensor to_host(const Matd& m) {
    HostTensor t;
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.values.assign(m.data(), m.data() + m.size());
    return t;
}

HostTensor to_host(const Ten3d& x) {
    HostTensor t;
    t.dims = {static_cast<std::uint64_t>(x.d0()), static_cast<std::uint64_t>(x.d1()),
              static_cast<std::uint64_t>(x.d2())};
    t.values = x.values();
    return t;
}

Matd to_mat(const HostTensor& t) {
    if (t.dims.size() != 2) throw IoError("expected a rank-2 tensor, got rank " + std::to_string(t.dims.size()));
    Matd m(static_cast<Index>(t.dims[0]), static_cast<Index>(t.dims[1]));
    std::memcpy(m.data(), t.values.data(), t.values.size() * sizeof(double));
    return m;
}

Ten3d to_ten3(const HostTensor& t) {
    if (t.dims.size() != 3) throw IoError("expected a rank-3 tensor, got rank " + std::to_string(t.dims.size()));
    return Ten3d(static_cast<Index>(t.dims[0]), static_cast<Index>(t.dims[1]), static_cast<Index>(t.dims[2]),
                 t.values);
}

}  // namespace htp
