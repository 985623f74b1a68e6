#include "htp/checkpoint.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <set>

namespace htp::model {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'T', 'P', 'C'};

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> buf{};
    for (std::size_t i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(buf.data(), buf.size());
}

std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> buf{};
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw IoError("checkpoint: truncated header");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params) {
    nlohmann::ordered_json entries = nlohmann::ordered_json::object();
    std::string blobs;
    params.visit([&](const std::string& name, const Matd& m) {
        const std::string blob = encode_htp1(to_host(m));
        entries[name] = {{"offset", blobs.size()}, {"size", blob.size()}, {"shape", {m.rows(), m.cols()}}};
        blobs += blob;
    });
    const std::string manifest = nlohmann::ordered_json{{"format", "HTPC"}, {"version", 1}, {"tensors", entries}}.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kMagic.data(), kMagic.size());
    put_u64(os, manifest.size());
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    os.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

DenoiserParams load_checkpoint(const std::filesystem::path& path, const DenoiserConfig& cfg) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("checkpoint: bad magic in " + path.string());
    const std::uint64_t manifest_len = get_u64(is);
    if (manifest_len > (std::uint64_t{1} << 30)) throw IoError("checkpoint: implausible manifest length");
    std::string manifest(manifest_len, '\0');
    if (!is.read(manifest.data(), static_cast<std::streamsize>(manifest_len))) throw IoError("checkpoint: truncated manifest");
    const std::string blobs((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(manifest);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
    }
    if (!doc.contains("tensors") || !doc["tensors"].is_object()) throw IoError("checkpoint: manifest lacks tensors");
    const auto& tensors = doc["tensors"];

    DenoiserParams params = zero_params(cfg);
    std::set<std::string> seen;
    params.visit([&](const std::string& name, Matd& m) {
        if (!tensors.contains(name)) throw IoError("checkpoint: missing parameter " + name);
        const auto& e = tensors[name];
        const auto offset = e.at("offset").get<std::uint64_t>();
        const auto size = e.at("size").get<std::uint64_t>();
        if (offset > blobs.size() || size > blobs.size() - offset) {
            throw IoError("checkpoint: entry " + name + " lies outside the file");
        }
        const HostTensor t = decode_htp1(blobs.substr(offset, size));
        if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint64_t>(m.rows()) ||
            t.dims[1] != static_cast<std::uint64_t>(m.cols())) {
            std::string got;
            for (auto d : t.dims) got += (got.empty() ? "" : "x") + std::to_string(d);
            throw IoError("checkpoint: parameter " + name + " has shape (" + got + "), config expects " + shape_str(m));
        }
        m = to_mat(t);
        seen.insert(name);
    });
    for (const auto& item : tensors.items()) {
        if (!seen.count(item.key())) throw IoError("checkpoint: unexpected parameter " + item.key());
    }
    return params;
}

}  // namespace htp::model
