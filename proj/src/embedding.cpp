#include "oki/embedding.hpp"

#include <algorithm>
#include <cmath>

namespace oki {

double dot(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) {
    throw ShapeError("vector dimension mismatch: " + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * q[i];
  return s;
}

double l2_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine_similarity(const Vec& p, const Vec& q) {
  double num = dot(p, q);
  double np = l2_norm(p);
  double nq = l2_norm(q);
  if (np == 0.0 || nq == 0.0) throw DomainError("cosine similarity of zero-norm vector");
  double c = num / (np * nq);
  return std::clamp(c, -1.0, 1.0);
}

// -- HashEncoder --------------------------------------------------------------

HashEncoder::HashEncoder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension < 8) throw DomainError("hash encoder dimension must be >= 8");
}

Vec HashEncoder::encode(const std::string& text) const {
  if (text.empty()) throw DomainError("cannot encode empty text");

  // canonical form: lowercased, non-alphanumeric runs collapsed to one space
  std::string canon;
  canon.reserve(text.size());
  bool pending = false;
  for (char ch : text) {
    if (is_ascii_alnum(ch)) {
      if (pending && !canon.empty()) canon.push_back(' ');
      pending = false;
      canon.push_back(lower_ascii_char(ch));
    } else {
      pending = true;
    }
  }

  Vec v(dimension_, 0.0);
  auto bump = [&](std::string_view feature) {
    std::uint64_t h = mix64(seed_, fnv1a64(feature));
    std::size_t bucket = static_cast<std::size_t>(h % dimension_);
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
  };

  std::size_t features = 0;
  std::size_t start = 0;
  while (start < canon.size()) {
    std::size_t end = canon.find(' ', start);
    if (end == std::string::npos) end = canon.size();
    if (end > start) {
      std::string word = "w:" + canon.substr(start, end - start);
      bump(word);
      ++features;
    }
    start = end + 1;
  }
  if (canon.size() >= 3) {
    for (std::size_t i = 0; i + 3 <= canon.size(); ++i) {
      char buf[5] = {'t', ':', canon[i], canon[i + 1], canon[i + 2]};
      bump(std::string_view(buf, 5));
      ++features;
    }
  }
  if (features == 0) throw DomainError("text has no hashable features: " + text);

  double norm = l2_norm(v);
  if (norm == 0.0) throw DomainError("hash features cancelled to the zero vector");
  for (double& x : v) x /= norm;
  return v;
}

std::string HashEncoder::name() const { return "hash" + std::to_string(dimension_); }

// -- AdapterEncoder -----------------------------------------------------------

AdapterEncoder::AdapterEncoder(std::shared_ptr<const Encoder> base,
                               std::size_t output_dimension, bool normalize_output)
    : base_(std::move(base)),
      input_dim_(base_->dimension()),
      output_dim_(output_dimension),
      normalize_(normalize_output),
      weights_(output_dimension * input_dim_, 0.0),
      bias_(output_dimension, 0.0) {
  if (output_dim_ == 0) throw DomainError("adapter output dimension must be positive");
}

AdapterEncoder AdapterEncoder::identity(std::shared_ptr<const Encoder> base,
                                        bool normalize_output) {
  std::size_t n = base->dimension();
  AdapterEncoder a(std::move(base), n, normalize_output);
  for (std::size_t i = 0; i < n; ++i) a.weights_[i * n + i] = 1.0;
  return a;
}

Vec AdapterEncoder::affine(const Vec& base_vector) const {
  if (base_vector.size() != input_dim_) {
    throw ShapeError("adapter input dimension mismatch");
  }
  Vec y(output_dim_, 0.0);
  for (std::size_t r = 0; r < output_dim_; ++r) {
    const double* row = &weights_[r * input_dim_];
    double acc = bias_[r];
    for (std::size_t c = 0; c < input_dim_; ++c) acc += row[c] * base_vector[c];
    y[r] = acc;
  }
  return y;
}

Vec AdapterEncoder::apply(const Vec& base_vector) const {
  Vec y = affine(base_vector);
  if (normalize_) {
    double norm = l2_norm(y);
    if (norm == 0.0) throw DomainError("adapter output has zero norm");
    for (double& x : y) x /= norm;
  }
  return y;
}

Vec AdapterEncoder::encode(const std::string& text) const {
  return apply(base_->encode(text));
}

std::string AdapterEncoder::name() const { return base_->name() + "+adapter"; }

namespace {
constexpr char kAdapterMagic[4] = {'O', 'I', 'A', 'D'};
constexpr std::uint32_t kAdapterVersion = 1;
constexpr char kCacheMagic[4] = {'O', 'I', 'V', 'C'};
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

void AdapterEncoder::save(const std::filesystem::path& path) const {
  std::string out;
  out.append(kAdapterMagic, 4);
  put_u32(out, kAdapterVersion);
  put_u32(out, static_cast<std::uint32_t>(input_dim_));
  put_u32(out, static_cast<std::uint32_t>(output_dim_));
  put_u8(out, normalize_ ? 1 : 0);
  for (double w : weights_) put_f64(out, w);
  for (double b : bias_) put_f64(out, b);
  atomic_write_file(path, out);
}

AdapterEncoder AdapterEncoder::load(const std::filesystem::path& path,
                                    std::shared_ptr<const Encoder> base) {
  std::string data = read_text_file(path);
  BinaryReader r(data);
  if (r.bytes(4) != std::string(kAdapterMagic, 4)) {
    throw ParseError("not an adapter checkpoint: " + path.string());
  }
  if (r.u32() != kAdapterVersion) throw ParseError("unsupported checkpoint version");
  std::uint32_t n_in = r.u32();
  std::uint32_t n_out = r.u32();
  bool normalize = r.u8() != 0;
  if (base->dimension() != n_in) {
    throw ShapeError("checkpoint expects base dimension " + std::to_string(n_in) +
                     ", encoder has " + std::to_string(base->dimension()));
  }
  AdapterEncoder a(std::move(base), n_out, normalize);
  for (double& w : a.weights_) w = r.f64();
  for (double& b : a.bias_) b = r.f64();
  if (!r.exhausted()) throw ParseError("trailing bytes in checkpoint");
  return a;
}

// -- VectorCache ---------------------------------------------------------------

namespace {
Vec widen(const std::vector<float>& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]);
  return out;
}
}  // namespace

VectorCache::VectorCache(VectorCache&& other) noexcept {
  std::lock_guard<std::mutex> lock(other.mutex_);
  dimension_ = other.dimension_;
  encode_count_ = other.encode_count_;
  entries_ = std::move(other.entries_);
}

VectorCache& VectorCache::operator=(VectorCache&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    dimension_ = other.dimension_;
    encode_count_ = other.encode_count_;
    entries_ = std::move(other.entries_);
  }
  return *this;
}

void VectorCache::check_dimension(std::size_t dim) {
  if (dimension_ == 0) {
    dimension_ = dim;
  } else if (dimension_ != dim) {
    throw CacheError("vector cache dimension " + std::to_string(dimension_) +
                     " does not match encoder dimension " + std::to_string(dim));
  }
}

Vec VectorCache::get_or_encode(const std::string& text, const Encoder& encoder) {
  std::lock_guard<std::mutex> lock(mutex_);
  check_dimension(encoder.dimension());
  auto it = entries_.find(text);
  if (it != entries_.end()) return widen(it->second);
  Vec v = encoder.encode(text);
  std::vector<float> q(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) q[i] = static_cast<float>(v[i]);
  ++encode_count_;
  auto [pos, inserted] = entries_.emplace(text, std::move(q));
  (void)inserted;
  return widen(pos->second);
}

void VectorCache::encode_all(const std::vector<std::string>& texts, const Encoder& encoder) {
  for (const std::string& t : texts) get_or_encode(t, encoder);
}

bool VectorCache::contains(const std::string& text) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.count(text) > 0;
}

Vec VectorCache::get(const std::string& text) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(text);
  if (it == entries_.end()) throw LookupError("no cached vector for text: " + text);
  return widen(it->second);
}

std::size_t VectorCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

void VectorCache::save(const std::filesystem::path& path) const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<const std::string*> order;
  order.reserve(entries_.size());
  for (const auto& [text, vec] : entries_) order.push_back(&text);
  std::sort(order.begin(), order.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });

  std::string out;
  out.append(kCacheMagic, 4);
  put_u32(out, kCacheVersion);
  put_u32(out, static_cast<std::uint32_t>(dimension_));
  put_u64(out, entries_.size());
  for (const std::string* text : order) {
    put_u64(out, fnv1a64(*text));
    put_u32(out, static_cast<std::uint32_t>(text->size()));
    out.append(*text);
    for (float f : entries_.at(*text)) put_f32(out, f);
  }
  atomic_write_file(path, out);
}

VectorCache VectorCache::load(const std::filesystem::path& path) {
  std::string data = read_text_file(path);
  BinaryReader r(data);
  if (r.bytes(4) != std::string(kCacheMagic, 4)) {
    throw ParseError("not a vector cache file: " + path.string());
  }
  if (r.u32() != kCacheVersion) throw ParseError("unsupported vector cache version");
  VectorCache cache;
  cache.dimension_ = r.u32();
  std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t key = r.u64();
    std::uint32_t len = r.u32();
    std::string text = r.bytes(len);
    if (fnv1a64(text) != key) throw ParseError("vector cache key mismatch (corrupt file)");
    std::vector<float> vec(cache.dimension_);
    for (float& f : vec) f = r.f32();
    cache.entries_.emplace(std::move(text), std::move(vec));
  }
  if (!r.exhausted()) throw ParseError("trailing bytes in vector cache");
  return cache;
}

// -- PrecomputedEncoder ---------------------------------------------------------

PrecomputedEncoder::PrecomputedEncoder(VectorCache cache, std::string label)
    : cache_(std::move(cache)), label_(std::move(label)) {}

}  // namespace oki
