#pragma once

#include "htp/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace htp {

/// File or stream failure, including malformed HTP1 payloads.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rank-n float64 array as stored on disk.
///
/// Layout of an HTP1 blob: the 4 magic bytes `HTP1`, a u32 rank, `rank`
/// little-endian u64 extents, then prod(extents) little-endian float64 values
/// in row-major order.
struct HostTensor {
    std::vector<std::uint64_t> dims;
    std::vector<double> values;

    std::uint64_t element_count() const;
    friend bool operator==(const HostTensor&, const HostTensor&) = default;
};

void write_htp1(std::ostream& os, const HostTensor& t);
HostTensor read_htp1(std::istream& is);

void save_htp1(const std::filesystem::path& path, const HostTensor& t);
HostTensor load_htp1(const std::filesystem::path& path);

std::string encode_htp1(const HostTensor& t);
HostTensor decode_htp1(const std::string& bytes);

HostTensor to_host(const Matd& m);
HostTensor to_host(const Ten3d& t);
Matd to_mat(const HostTensor& t);
Ten3d to_ten3(const HostTensor& t);

}  // namespace htp
