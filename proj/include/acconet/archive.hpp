#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "acconet/tensor.hpp"

namespace acconet::io {

inline constexpr std::uint32_t kArchiveVersion = 1;

/// Named tensors plus string metadata. Used for pretrained backbone files
/// and training checkpoints alike.
///
/// On-disk layout (little endian):
///   magic "ACCONET\0" | u32 version | u32 n_meta | n_meta x (str key, str value)
///   | u32 n_tensors | n_tensors x (str name, i32 n, c, h, w, f64 data[])
/// where str is u32 length followed by bytes.
struct TensorArchive {
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;
};

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_archive(const std::filesystem::path& path, const TensorArchive& ar);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace acconet::io
