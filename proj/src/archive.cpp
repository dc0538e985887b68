#include "acconet/archive.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace acconet::io {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'C', 'C', 'O', 'N', 'E', 'T', '\0'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw ArchiveError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw ArchiveError("write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw ArchiveError("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw ArchiveError("truncated archive: " + path_.string());
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw ArchiveError("corrupt string length in " + path_.string());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_archive(const std::filesystem::path& path, const TensorArchive& ar) {
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(ar.meta.size()));
  for (const auto& [k, v] : ar.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ar.tensors.size()));
  for (const auto& [name, t] : ar.tensors) {
    w.str(name);
    w.i32(t.n());
    w.i32(t.c());
    w.i32(t.h());
    w.i32(t.w());
    w.bytes(t.data(), t.size() * sizeof(Real));
  }
  w.finish();
}

TensorArchive load_archive(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw ArchiveError("not a tensor archive: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw ArchiveError("unsupported archive version " + std::to_string(version) +
                       " in " + path.string());
  }
  TensorArchive ar;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ar.meta[k] = r.str();
  }
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    Shape s;
    s.n = r.i32();
    s.c = r.i32();
    s.h = r.i32();
    s.w = r.i32();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (1ull << 32)) {
      throw ArchiveError("corrupt tensor header for " + name);
    }
    Tensor t(s);
    r.bytes(t.data(), t.size() * sizeof(Real));
    ar.tensors.emplace(std::move(name), std::move(t));
  }
  return ar;
}

}  // namespace acconet::io
