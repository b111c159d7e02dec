#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlagen/numerics/param_store.hpp"
#include "mlagen/numerics/tensor.hpp"

namespace mlagen::io {

enum class DType { f32, f64, i32 };

struct ArchiveEntry {
    std::string name;
    std::vector<std::int64_t> shape;
    DType dtype = DType::f32;
    std::uint64_t offset = 0;  // from the start of the payload
    std::uint64_t nbytes = 0;
};

// Named tensors in one file:
//   line 1: "MLAGEN-TENSOR-ARCHIVE 1"
//   line 2: byte length of the JSON header
//   JSON header: {"endianness":"little","meta":{...},"entries":[{name,shape,dtype,offset,nbytes}]}
//   payload: raw little-endian contiguous row-major data
// Entries are written in name order so identical content gives identical bytes.
class TensorArchive {
public:
    void put(const std::string& name, const MatF& m);
    void put(const std::string& name, const MatD& m);
    void put_ints(const std::string& name, const std::vector<std::int32_t>& v);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const ArchiveEntry& entry(const std::string& name) const;
    std::vector<std::string> names() const;

    template <typename Scalar>
    Mat<Scalar> get(const std::string& name) const;
    std::vector<std::int32_t> get_ints(const std::string& name) const;

    nlohmann::json& meta() { return meta_; }
    const nlohmann::json& meta() const { return meta_; }

    std::string serialize() const;
    static TensorArchive deserialize(const std::string& bytes);
    void write(const std::filesystem::path& path) const;
    static TensorArchive read(const std::filesystem::path& path);

private:
    struct Stored {
        ArchiveEntry info;
        std::vector<char> bytes;
    };
    std::map<std::string, Stored> entries_;
    nlohmann::json meta_ = nlohmann::json::object();
};

// Parameters as "param/<name>" (with AdamW moments as "adam_m/", "adam_v/" when requested).
template <typename Scalar>
void put_params(TensorArchive& ar, const ParamStore<Scalar>& store, bool with_moments = false) {
    for (const auto& p : store.params()) {
        ar.put("param/" + p.name, p.value);
        if (with_moments) {
            ar.put("adam_m/" + p.name, p.m);
            ar.put("adam_v/" + p.name, p.v);
        }
    }
    ar.meta()["param_step"] = store.step();
}

// Loads values into an already-laid-out store; every parameter must be present.
template <typename Scalar>
void get_params(const TensorArchive& ar, ParamStore<Scalar>& store) {
    for (auto& p : store.params()) {
        const std::string key = "param/" + p.name;
        if (!ar.contains(key)) throw FormatError("checkpoint lacks parameter " + p.name);
        Mat<Scalar> v = ar.get<Scalar>(key);
        require_same_shape(v, p.value, ("checkpoint parameter " + p.name).c_str());
        p.value = std::move(v);
        if (ar.contains("adam_m/" + p.name)) {
            p.m = ar.get<Scalar>("adam_m/" + p.name);
            p.v = ar.get<Scalar>("adam_v/" + p.name);
        }
    }
    if (ar.meta().contains("param_step")) store.set_step(ar.meta()["param_step"].get<std::int64_t>());
}

// Git blob hash: sha1("blob <len>\0" + content), hex.
std::string git_blob_hash(const std::string& content);
std::string file_hash(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mlagen::io
