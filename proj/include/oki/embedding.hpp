#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "oki/util.hpp"

namespace oki {

using Vec = std::vector<double>;

double dot(const Vec& p, const Vec& q);
double l2_norm(const Vec& v);
// dot(p,q) / (|p| |q|); ShapeError on dimension mismatch, DomainError on a
// zero-norm argument
double cosine_similarity(const Vec& p, const Vec& q);

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::size_t dimension() const = 0;
  virtual Vec encode(const std::string& text) const = 0;
  virtual std::string name() const = 0;
};

// Feature-hashed bag of lowercased word unigrams and character trigrams,
// signed buckets, L2-normalized. Deterministic for a fixed (dimension, seed).
class HashEncoder : public Encoder {
 public:
  explicit HashEncoder(std::size_t dimension, std::uint64_t seed = 0x6f6b69);

  std::size_t dimension() const override { return dimension_; }
  Vec encode(const std::string& text) const override;
  std::string name() const override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Affine map (optionally L2-normalized) over a frozen base encoder:
// encode(t) = maybe_normalize(W * base.encode(t) + b).
class AdapterEncoder : public Encoder {
 public:
  AdapterEncoder(std::shared_ptr<const Encoder> base, std::size_t output_dimension,
                 bool normalize_output);

  static AdapterEncoder identity(std::shared_ptr<const Encoder> base,
                                 bool normalize_output);

  std::size_t dimension() const override { return output_dim_; }
  Vec encode(const std::string& text) const override;
  std::string name() const override;

  // forward pass from an already computed base vector
  Vec apply(const Vec& base_vector) const;
  // affine output before the optional normalization
  Vec affine(const Vec& base_vector) const;

  std::size_t input_dimension() const { return input_dim_; }
  bool normalize_output() const { return normalize_; }
  const Encoder& base() const { return *base_; }
  std::shared_ptr<const Encoder> base_ptr() const { return base_; }

  // W is row-major output_dim x input_dim
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }
  std::size_t parameter_count() const { return weights_.size() + bias_.size(); }

  void save(const std::filesystem::path& path) const;
  static AdapterEncoder load(const std::filesystem::path& path,
                             std::shared_ptr<const Encoder> base);

 private:
  std::shared_ptr<const Encoder> base_;
  std::size_t input_dim_;
  std::size_t output_dim_;
  bool normalize_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

// Serves encoder outputs, each text encoded at most once. Vectors are
// quantized to f32 at insertion so warm and cold runs see identical values.
// Concurrent readers are fine; writes are serialized internally.
class VectorCache {
 public:
  VectorCache() = default;
  VectorCache(VectorCache&& other) noexcept;
  VectorCache& operator=(VectorCache&& other) noexcept;
  VectorCache(const VectorCache&) = delete;
  VectorCache& operator=(const VectorCache&) = delete;

  Vec get_or_encode(const std::string& text, const Encoder& encoder);
  void encode_all(const std::vector<std::string>& texts, const Encoder& encoder);

  bool contains(const std::string& text) const;
  Vec get(const std::string& text) const;  // LookupError when absent
  std::size_t size() const;
  std::size_t dimension() const { return dimension_; }
  std::size_t encode_count() const { return encode_count_; }

  void save(const std::filesystem::path& path) const;
  static VectorCache load(const std::filesystem::path& path);

 private:
  void check_dimension(std::size_t dim);

  mutable std::mutex mutex_;
  std::size_t dimension_ = 0;
  std::size_t encode_count_ = 0;
  std::unordered_map<std::string, std::vector<float>> entries_;
};

// Encoder backed entirely by externally supplied vectors (a saved
// VectorCache); unknown text raises LookupError.
class PrecomputedEncoder : public Encoder {
 public:
  explicit PrecomputedEncoder(VectorCache cache, std::string label = "precomputed");

  std::size_t dimension() const override { return cache_.dimension(); }
  Vec encode(const std::string& text) const override { return cache_.get(text); }
  std::string name() const override { return label_; }

 private:
  VectorCache cache_;
  std::string label_;
};

}  // namespace oki
