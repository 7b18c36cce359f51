#pragma once

// SHA-256 fingerprints of model parameters and configuration text.

#include "speakloc/volume.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <string_view>

namespace speakloc {

inline constexpr const char* kVersion = "0.1.0";

/// Versions of this library, its dependencies and the compiler.
nlohmann::json build_info();

/// Lower-case hex SHA-256 of arbitrary bytes.
std::string sha256_hex(const void* data, std::size_t size);
inline std::string sha256_hex(std::string_view text) { return sha256_hex(text.data(), text.size()); }

/// Incremental hasher.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size);
  std::string hex();

 private:
  void* ctx_;
};

/// Hash of every parameter tensor (shape and raw float bytes) in visit order.
template <typename Model>
std::string parameter_digest(const Model& model) {
  Sha256 h;
  model.visit([&](const Mat<float>& m) {
    const long long shape[2] = {static_cast<long long>(m.rows()), static_cast<long long>(m.cols())};
    h.update(shape, sizeof shape);
    h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(float));
  });
  return h.hex();
}

}  // namespace speakloc
