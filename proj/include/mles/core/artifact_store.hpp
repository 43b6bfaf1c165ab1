#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <thread>

#include "mles/core/error.hpp"
#include "mles/core/hash.hpp"

namespace mles {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Content-addressed blob store rooted at `<run_dir>/artifacts`. References
/// are paths relative to the run directory, e.g. `artifacts/<sha256>.png`.
class ArtifactStore {
public:
  explicit ArtifactStore(fs::path run_dir) : root_(std::move(run_dir)) {}

  [[nodiscard]] const fs::path& run_dir() const noexcept { return root_; }

  std::string put(std::string_view content, std::string_view extension) {
    const std::string ref = "artifacts/" + sha256_hex(content) + "." + std::string(extension);
    const auto path = root_ / ref;
    if (!fs::exists(path)) write_file(path, content);
    return ref;
  }

  std::string put(std::span<const std::uint8_t> content, std::string_view extension) {
    return put(std::string_view(reinterpret_cast<const char*>(content.data()), content.size()), extension);
  }

  [[nodiscard]] bool contains(std::string_view ref) const { return fs::exists(root_ / fs::path(ref)); }

  [[nodiscard]] std::string get(std::string_view ref) const {
    if (!contains(ref)) fail(ErrorCode::IoError, "artifact not found: " + std::string(ref));
    return read_file(root_ / fs::path(ref));
  }

private:
  fs::path root_;
};

} // namespace mles
