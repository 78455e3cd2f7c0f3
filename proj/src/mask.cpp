#include "sparsest/mask.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <sstream>

namespace sparsest {

LayerMask::LayerMask(int rows, int cols, bool fill)
    : rows_(rows),
      cols_(cols),
      bits_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
            fill ? 1 : 0) {
  if (rows < 0 || cols < 0) throw MaskError("negative mask dimensions");
}

std::int64_t LayerMask::popcount() const {
  return std::count(bits_.begin(), bits_.end(), std::uint8_t{1});
}

int LayerMask::row_popcount(int r) const {
  int n = 0;
  for (int c = 0; c < cols_; ++c) n += bits_[index(r, c)];
  return n;
}

bool LayerMask::row_any(int r) const { return row_popcount(r) > 0; }

bool LayerMask::col_any(int c) const {
  for (int r = 0; r < rows_; ++r) {
    if (bits_[index(r, c)]) return true;
  }
  return false;
}

std::uint64_t LayerMask::row_value(int r) const {
  if (cols_ > 64) throw MaskError("row_value needs cols <= 64");
  std::uint64_t v = 0;
  for (int c = 0; c < cols_; ++c) v = (v << 1) | bits_[index(r, c)];
  return v;
}

LayerMask LayerMask::padded(int rows, int cols) const {
  if (rows < rows_ || cols < cols_) throw MaskError("cannot pad to a smaller shape");
  LayerMask out(rows, cols);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) out.set(r, c, (*this)(r, c));
  }
  return out;
}

std::string to_string(const NeuronConfig& c) {
  return std::to_string(c.d1) + "," + std::to_string(c.d2) + "," +
         std::to_string(c.d3);
}

NeuronConfig parse_neuron_config(std::string_view s) {
  std::array<int, 3> d{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? s.find(',', pos) : s.size();
    if (end == std::string_view::npos) {
      throw MaskError("neuron config needs three comma-separated counts");
    }
    const auto part = s.substr(pos, end - pos);
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), d[i]);
    if (ec != std::errc{} || p != part.data() + part.size()) {
      throw MaskError("bad neuron count: " + std::string(part));
    }
    pos = end + 1;
  }
  return {d[0], d[1], d[2]};
}

std::array<std::pair<int, int>, kDepth> layer_shapes(int width) {
  return {{{width, kInputDim}, {width, width}, {width, width}, {kOutputDim, width}}};
}

ModelMask dense_mask(int width) {
  ModelMask mm;
  const auto shapes = layer_shapes(width);
  for (int l = 0; l < kDepth; ++l) {
    mm.weights[l] = LayerMask(shapes[l].first, shapes[l].second, true);
    mm.bias[l].assign(static_cast<std::size_t>(shapes[l].first), 1);
  }
  mm.provenance = "dense";
  return mm;
}

ModelMask empty_mask(int width) {
  ModelMask mm;
  const auto shapes = layer_shapes(width);
  for (int l = 0; l < kDepth; ++l) {
    mm.weights[l] = LayerMask(shapes[l].first, shapes[l].second, false);
    mm.bias[l].assign(static_cast<std::size_t>(shapes[l].first), 0);
  }
  mm.provenance = "empty";
  return mm;
}

ModelMask structured_mask(const NeuronConfig& cfg, int width) {
  for (int d : {cfg.d1, cfg.d2, cfg.d3}) {
    if (d < 1 || d > width) {
      throw MaskError("neuron config " + to_string(cfg) + " outside [1, " +
                      std::to_string(width) + "]");
    }
  }
  const auto dims = cfg.dims();
  ModelMask mm = empty_mask(width);
  for (int l = 0; l < kDepth; ++l) {
    for (int r = 0; r < dims[l + 1]; ++r) {
      for (int c = 0; c < dims[l]; ++c) mm.weights[l].set(r, c, true);
      mm.bias[l][static_cast<std::size_t>(r)] = 1;
    }
  }
  mm.provenance = "structured";
  return mm;
}

std::int64_t structured_cost(const NeuronConfig& cfg) {
  const std::int64_t d1 = cfg.d1, d2 = cfg.d2, d3 = cfg.d3;
  return (2 * d1 + d1) + (d1 * d2 + d2) + (d2 * d3 + d3) + (d3 * 1 + 1);
}

bool is_canonical(const LayerMask& s) {
  for (int c = 0; c < s.cols(); ++c) {
    if (!s.col_any(c)) return false;
  }
  for (int i = 0; i + 1 < s.rows(); ++i) {
    const int a = s.row_popcount(i);
    const int b = s.row_popcount(i + 1);
    if (a > b) return false;
    if (a == b && s.row_value(i) > s.row_value(i + 1)) return false;
  }
  return true;
}

// --- enumeration ------------------------------------------------------------

EligibleMaskStream::EligibleMaskStream(int d_in, int d_out)
    : d_in_(d_in), d_out_(d_out), n_(std::max(d_in, d_out)) {
  if (d_in < 1 || d_out < 1) throw MaskError("mask dimensions must be >= 1");
  if (d_in > 62) throw MaskError("enumeration supports d_in <= 62");
  by_count_.resize(static_cast<std::size_t>(d_in) + 1);
  if (d_in <= 24) {
    for (std::uint64_t v = 1; v < (std::uint64_t{1} << d_in); ++v) {
      by_count_[static_cast<std::size_t>(std::popcount(v))].push_back(v);
    }
  } else {
    throw MaskError("enumeration of rows wider than 24 bits is not supported");
  }
  ks_.assign(static_cast<std::size_t>(d_out), 1);
  idx_.assign(static_cast<std::size_t>(d_out), 0);
}

bool EligibleMaskStream::load_composition() {
  // Smallest composition of n_ in lexicographic order: each part as small as
  // the remaining parts allow.
  int remaining = n_;
  for (int i = 0; i < d_out_; ++i) {
    const int rest = d_out_ - i - 1;
    const int k = std::max(1, remaining - rest * d_in_);
    if (k > d_in_) return false;
    ks_[static_cast<std::size_t>(i)] = k;
    remaining -= k;
  }
  if (remaining != 0) return false;
  std::fill(idx_.begin(), idx_.end(), 0);
  return true;
}

bool EligibleMaskStream::advance_composition() {
  // Rightmost position that can grow while the suffix stays fillable.
  for (int i = d_out_ - 2; i >= 0; --i) {
    int prefix = 0;
    for (int j = 0; j <= i; ++j) prefix += ks_[static_cast<std::size_t>(j)];
    const int len = d_out_ - i - 1;
    const int k = ks_[static_cast<std::size_t>(i)] + 1;
    const int suffix = n_ - (prefix + 1);
    if (k > d_in_ || suffix < len || suffix > len * d_in_) continue;
    ks_[static_cast<std::size_t>(i)] = k;
    int remaining = suffix;
    for (int j = i + 1; j < d_out_; ++j) {
      const int rest = d_out_ - j - 1;
      const int kj = std::max(1, remaining - rest * d_in_);
      ks_[static_cast<std::size_t>(j)] = kj;
      remaining -= kj;
    }
    std::fill(idx_.begin(), idx_.end(), 0);
    return true;
  }
  return false;
}

bool EligibleMaskStream::advance_rows() {
  for (int i = d_out_ - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& choices = by_count_[static_cast<std::size_t>(ks_[ui])];
    if (++idx_[ui] < choices.size()) return true;
    idx_[ui] = 0;
  }
  return false;
}

std::optional<LayerMask> EligibleMaskStream::next() {
  const std::uint64_t full = (std::uint64_t{1} << d_in_) - 1;
  std::vector<std::uint64_t> rows(static_cast<std::size_t>(d_out_));
  while (!done_) {
    if (!started_) {
      started_ = true;
      while (!load_composition()) {
        if (++n_ > d_in_ * d_out_) {
          done_ = true;
          return std::nullopt;
        }
      }
    } else if (!advance_rows() && !advance_composition()) {
      bool loaded = false;
      while (++n_ <= d_in_ * d_out_) {
        if (load_composition()) {
          loaded = true;
          break;
        }
      }
      if (!loaded) {
        done_ = true;
        return std::nullopt;
      }
    }

    std::uint64_t cover = 0;
    for (int i = 0; i < d_out_; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      rows[ui] = by_count_[static_cast<std::size_t>(ks_[ui])][idx_[ui]];
      cover |= rows[ui];
    }
    if (cover != full) continue;
    bool ordered = true;
    for (int i = 0; i + 1 < d_out_ && ordered; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (ks_[ui] > ks_[ui + 1]) ordered = false;
      if (ks_[ui] == ks_[ui + 1] && rows[ui] > rows[ui + 1]) ordered = false;
    }
    if (!ordered) continue;

    LayerMask m(d_out_, d_in_);
    for (int r = 0; r < d_out_; ++r) {
      for (int c = 0; c < d_in_; ++c) {
        m.set(r, c, (rows[static_cast<std::size_t>(r)] >> (d_in_ - 1 - c)) & 1);
      }
    }
    return m;
  }
  return std::nullopt;
}

std::vector<LayerMask> eligible_masks(int d_in, int d_out) {
  std::vector<LayerMask> out;
  EligibleMaskStream s(d_in, d_out);
  while (auto m = s.next()) out.push_back(std::move(*m));
  return out;
}

namespace {

BigInt binomial(const BigInt& n, int k) {
  if (k < 0 || n < k) return 0;
  BigInt r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
  }
  return r;
}

}  // namespace

BigInt count_eligible_big(int d_in, int d_out) {
  if (d_in < 1 || d_out < 1) throw MaskError("mask dimensions must be >= 1");
  if (d_in > 62) throw MaskError("count_eligible supports d_in <= 62");
  BigInt total = 0;
  for (int j = 0; j <= d_in; ++j) {
    const BigInt rows = (BigInt{1} << (d_in - j)) - 1;
    // Multisets of size d_out from `rows` kinds: C(rows + d_out - 1, d_out).
    const BigInt term = binomial(BigInt(d_in), j) *
                        (rows == 0 ? BigInt{0} : binomial(rows + d_out - 1, d_out));
    total += (j % 2 == 0) ? term : BigInt(-term);
  }
  return total;
}

std::uint64_t count_eligible(int d_in, int d_out) {
  const BigInt c = count_eligible_big(d_in, d_out);
  if (c > BigInt(std::numeric_limits<std::uint64_t>::max())) {
    throw std::overflow_error("eligible count exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(c);
}

BigInt count_model_masks(const NeuronConfig& cfg) {
  const auto d = cfg.dims();
  BigInt p = 1;
  for (int l = 0; l < kDepth; ++l) p *= count_eligible_big(d[l], d[l + 1]);
  return p;
}

ModelMask bias_mask_search(ModelMask mm) {
  for (int l = 0; l < kDepth; ++l) {
    const LayerMask& w = mm.weights[l];
    mm.bias[l].assign(static_cast<std::size_t>(w.rows()), 0);
    for (int r = 0; r < w.rows(); ++r) {
      mm.bias[l][static_cast<std::size_t>(r)] = w.row_any(r) ? 1 : 0;
    }
  }
  return mm;
}

ModelMask bias_mask_pruning(ModelMask mm) {
  for (int l = 0; l + 1 < kDepth; ++l) {
    const LayerMask& next = mm.weights[l + 1];
    const int rows = mm.weights[l].rows();
    mm.bias[l].assign(static_cast<std::size_t>(rows), 0);
    for (int i = 0; i < rows; ++i) {
      mm.bias[l][static_cast<std::size_t>(i)] = next.col_any(i) ? 1 : 0;
    }
  }
  mm.bias[kDepth - 1].assign(static_cast<std::size_t>(mm.weights[kDepth - 1].rows()), 1);
  return mm;
}

ModelMask apply_bias_rule(ModelMask mm, BiasRule rule) {
  return rule == BiasRule::search ? bias_mask_search(std::move(mm))
                                  : bias_mask_pruning(std::move(mm));
}

std::int64_t weight_nnz(const ModelMask& mm) {
  std::int64_t n = 0;
  for (const auto& w : mm.weights) n += w.popcount();
  return n;
}

std::int64_t bias_nnz(const ModelMask& mm) {
  std::int64_t n = 0;
  for (const auto& b : mm.bias) n += std::count(b.begin(), b.end(), std::uint8_t{1});
  return n;
}

std::int64_t nnz(const ModelMask& mm, bool include_bias) {
  return weight_nnz(mm) + (include_bias ? bias_nnz(mm) : 0);
}

std::string format_mask_line(const ModelMask& mm) {
  std::string out;
  for (int l = 0; l < kDepth; ++l) {
    if (l > 0) out += '|';
    const LayerMask& w = mm.weights[l];
    for (int r = 0; r < w.rows(); ++r) {
      if (r > 0) out += ';';
      for (int c = 0; c < w.cols(); ++c) out += w(r, c) ? '1' : '0';
    }
  }
  return out;
}

ModelMask parse_mask_line(std::string_view line, BiasRule rule) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) {
    line.remove_suffix(1);
  }
  std::vector<std::vector<std::string>> layers;
  std::size_t pos = 0;
  for (int l = 0; l < kDepth; ++l) {
    const std::size_t end = l < kDepth - 1 ? line.find('|', pos) : line.size();
    if (end == std::string_view::npos) throw MaskError("mask line needs 4 layers");
    std::vector<std::string> rows;
    std::string_view layer = line.substr(pos, end - pos);
    std::size_t rp = 0;
    while (true) {
      const std::size_t re = layer.find(';', rp);
      rows.emplace_back(layer.substr(rp, re == std::string_view::npos ? re : re - rp));
      if (re == std::string_view::npos) break;
      rp = re + 1;
    }
    layers.push_back(std::move(rows));
    pos = end + 1;
  }
  const int width = static_cast<int>(layers[0].size());
  const auto shapes = layer_shapes(width);
  ModelMask mm = empty_mask(width);
  for (int l = 0; l < kDepth; ++l) {
    const auto& rows = layers[static_cast<std::size_t>(l)];
    if (static_cast<int>(rows.size()) != shapes[l].first) {
      throw MaskError("layer " + std::to_string(l + 1) + " has wrong row count");
    }
    for (int r = 0; r < shapes[l].first; ++r) {
      const std::string& bits = rows[static_cast<std::size_t>(r)];
      if (static_cast<int>(bits.size()) != shapes[l].second) {
        throw MaskError("layer " + std::to_string(l + 1) + " has wrong row length");
      }
      for (int c = 0; c < shapes[l].second; ++c) {
        const char ch = bits[static_cast<std::size_t>(c)];
        if (ch != '0' && ch != '1') throw MaskError("mask bits must be 0 or 1");
        mm.weights[l].set(r, c, ch == '1');
      }
    }
  }
  mm.provenance = "file";
  return apply_bias_rule(std::move(mm), rule);
}

}  // namespace sparsest
