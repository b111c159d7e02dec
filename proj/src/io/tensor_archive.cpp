#include "mlagen/io/tensor_archive.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "archive payloads assume a little-endian host");

namespace mlagen::io {

namespace {

constexpr const char* kMagic = "MLAGEN-TENSOR-ARCHIVE 1";

const char* dtype_name(DType t) {
    switch (t) {
        case DType::f32: return "f32";
        case DType::f64: return "f64";
        case DType::i32: return "i32";
    }
    return "f32";
}

DType parse_dtype(const std::string& s) {
    if (s == "f32") return DType::f32;
    if (s == "f64") return DType::f64;
    if (s == "i32") return DType::i32;
    throw FormatError("unknown dtype in archive: " + s);
}

std::size_t dtype_size(DType t) { return t == DType::f64 ? 8 : 4; }

template <typename T>
std::vector<char> raw_bytes(const T* data, std::size_t n) {
    std::vector<char> b(n * sizeof(T));
    if (n) std::memcpy(b.data(), data, b.size());
    return b;
}

}  // namespace

void TensorArchive::put(const std::string& name, const MatF& m) {
    Stored s;
    s.info = {name, {m.rows(), m.cols()}, DType::f32, 0, 0};
    s.bytes = raw_bytes(m.data(), static_cast<std::size_t>(m.size()));
    entries_[name] = std::move(s);
}

void TensorArchive::put(const std::string& name, const MatD& m) {
    Stored s;
    s.info = {name, {m.rows(), m.cols()}, DType::f64, 0, 0};
    s.bytes = raw_bytes(m.data(), static_cast<std::size_t>(m.size()));
    entries_[name] = std::move(s);
}

void TensorArchive::put_ints(const std::string& name, const std::vector<std::int32_t>& v) {
    Stored s;
    s.info = {name, {static_cast<std::int64_t>(v.size())}, DType::i32, 0, 0};
    s.bytes = raw_bytes(v.data(), v.size());
    entries_[name] = std::move(s);
}

const ArchiveEntry& TensorArchive::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("archive has no entry " + name);
    return it->second.info;
}

std::vector<std::string> TensorArchive::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

template <typename Scalar>
Mat<Scalar> TensorArchive::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("archive has no entry " + name);
    const auto& info = it->second.info;
    const auto& b = it->second.bytes;
    if (info.shape.size() != 2) throw FormatError("entry " + name + " is not rank 2");
    const auto r = info.shape[0], c = info.shape[1];
    if (info.dtype == DType::f32) {
        MatF m(r, c);
        if (!b.empty()) std::memcpy(m.data(), b.data(), b.size());
        return m.cast<Scalar>();
    }
    if (info.dtype == DType::f64) {
        MatD m(r, c);
        if (!b.empty()) std::memcpy(m.data(), b.data(), b.size());
        return m.cast<Scalar>();
    }
    throw FormatError("entry " + name + " is not floating point");
}

template MatF TensorArchive::get<float>(const std::string&) const;
template MatD TensorArchive::get<double>(const std::string&) const;

std::vector<std::int32_t> TensorArchive::get_ints(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("archive has no entry " + name);
    if (it->second.info.dtype != DType::i32) throw FormatError("entry " + name + " is not i32");
    std::vector<std::int32_t> v(it->second.bytes.size() / 4);
    if (!v.empty()) std::memcpy(v.data(), it->second.bytes.data(), it->second.bytes.size());
    return v;
}

std::string TensorArchive::serialize() const {
    nlohmann::json header;
    header["endianness"] = "little";
    header["meta"] = meta_;
    header["entries"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, s] : entries_) {
        header["entries"].push_back({{"name", name},
                                     {"shape", s.info.shape},
                                     {"dtype", dtype_name(s.info.dtype)},
                                     {"offset", offset},
                                     {"nbytes", s.bytes.size()}});
        offset += s.bytes.size();
    }
    const std::string h = header.dump();
    std::string out = std::string(kMagic) + "\n" + std::to_string(h.size()) + "\n" + h;
    out.reserve(out.size() + offset);
    for (const auto& [name, s] : entries_) out.append(s.bytes.data(), s.bytes.size());
    return out;
}

TensorArchive TensorArchive::deserialize(const std::string& bytes) {
    std::size_t p1 = bytes.find('\n');
    if (p1 == std::string::npos || bytes.compare(0, p1, kMagic) != 0)
        throw FormatError("not a tensor archive (bad magic)");
    std::size_t p2 = bytes.find('\n', p1 + 1);
    if (p2 == std::string::npos) throw FormatError("truncated tensor archive header");
    const auto hlen = std::stoull(bytes.substr(p1 + 1, p2 - p1 - 1));
    if (p2 + 1 + hlen > bytes.size()) throw FormatError("truncated tensor archive header");
    auto header = nlohmann::json::parse(bytes.substr(p2 + 1, hlen));
    if (header.value("endianness", "") != "little") throw FormatError("unsupported endianness");
    const std::size_t base = p2 + 1 + hlen;
    TensorArchive ar;
    ar.meta_ = header.value("meta", nlohmann::json::object());
    for (const auto& e : header["entries"]) {
        Stored s;
        s.info.name = e["name"].get<std::string>();
        s.info.shape = e["shape"].get<std::vector<std::int64_t>>();
        s.info.dtype = parse_dtype(e["dtype"].get<std::string>());
        s.info.offset = e["offset"].get<std::uint64_t>();
        s.info.nbytes = e["nbytes"].get<std::uint64_t>();
        std::uint64_t count = 1;
        for (auto d : s.info.shape) count *= static_cast<std::uint64_t>(d);
        if (count * dtype_size(s.info.dtype) != s.info.nbytes)
            throw FormatError("entry " + s.info.name + ": shape and byte count disagree");
        if (base + s.info.offset + s.info.nbytes > bytes.size())
            throw FormatError("entry " + s.info.name + ": payload out of range");
        s.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(base + s.info.offset),
                       bytes.begin() + static_cast<std::ptrdiff_t>(base + s.info.offset + s.info.nbytes));
        ar.entries_[s.info.name] = std::move(s);
    }
    return ar;
}

void TensorArchive::write(const std::filesystem::path& path) const { write_file(path, serialize()); }

TensorArchive TensorArchive::read(const std::filesystem::path& path) {
    return deserialize(read_file(path));
}

std::string git_blob_hash(const std::string& content) {
    const std::string prefix = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, prefix.data(), prefix.size());
    EVP_DigestUpdate(ctx, content.data(), content.size());
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

std::string file_hash(const std::filesystem::path& path) { return git_blob_hash(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("missing artifact: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace mlagen::io
