#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace sparsest {

inline constexpr int kDepth = 4;
inline constexpr int kInputDim = 2;
inline constexpr int kOutputDim = 1;

/// Binary d_out x d_in matrix, row-major.
class LayerMask {
 public:
  LayerMask() = default;
  LayerMask(int rows, int cols, bool fill = false);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  bool operator()(int r, int c) const { return bits_[index(r, c)] != 0; }
  void set(int r, int c, bool v) { bits_[index(r, c)] = v ? 1 : 0; }

  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::int64_t popcount() const;
  int row_popcount(int r) const;
  bool row_any(int r) const;
  bool col_any(int c) const;

  /// Row value with column 0 as the most significant bit.
  std::uint64_t row_value(int r) const;

  /// Embeds this mask in the top-left corner of a rows x cols zero matrix.
  LayerMask padded(int rows, int cols) const;

  friend bool operator==(const LayerMask&, const LayerMask&) = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct NeuronConfig {
  int d1 = 1;
  int d2 = 1;
  int d3 = 1;

  /// Neuron counts d0..d4 including the fixed input and output dims.
  std::array<int, kDepth + 1> dims() const {
    return {kInputDim, d1, d2, d3, kOutputDim};
  }
  auto operator<=>(const NeuronConfig&) const = default;
};

std::string to_string(const NeuronConfig& c);
NeuronConfig parse_neuron_config(std::string_view s);

enum class BiasRule { search, pruning };

/// Per-layer weight masks at full width plus bias masks.
struct ModelMask {
  std::array<LayerMask, kDepth> weights;
  std::array<std::vector<std::uint8_t>, kDepth> bias;
  std::string provenance;

  int width() const { return weights[0].rows(); }

  friend bool operator==(const ModelMask& a, const ModelMask& b) {
    return a.weights == b.weights && a.bias == b.bias;
  }
};

class MaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Layer shapes (rows, cols) of a width-D model.
std::array<std::pair<int, int>, kDepth> layer_shapes(int width);

/// All-ones weight and bias masks.
ModelMask dense_mask(int width);

/// All-zero weight masks, bias masks all-zero.
ModelMask empty_mask(int width);

/// Top-left d[l] x d[l-1] blocks, first d[l] biases.
ModelMask structured_mask(const NeuronConfig& cfg, int width);

/// (2 d1 + d1) + (d1 d2 + d2) + (d2 d3 + d3) + (d3 + 1).
std::int64_t structured_cost(const NeuronConfig& cfg);

/// Canonical representative test under row permutation: no zero column,
/// row popcounts non-decreasing, equal-popcount rows ordered by
/// non-decreasing row_value().
bool is_canonical(const LayerMask& s);

/// Lazy enumeration of canonical zero-row-free, zero-column-free
/// d_out x d_in masks, following the nested loop of the combinatorial search:
/// total nonzeros n ascending, row-count compositions in lexicographic order,
/// per-row masks in ascending row value (last row fastest).
class EligibleMaskStream {
 public:
  EligibleMaskStream(int d_in, int d_out);

  std::optional<LayerMask> next();

 private:
  bool advance_rows();
  bool advance_composition();
  bool load_composition();

  int d_in_;
  int d_out_;
  int n_;
  std::vector<std::vector<std::uint64_t>> by_count_;  // row values per popcount
  std::vector<int> ks_;
  std::vector<std::size_t> idx_;
  bool started_ = false;
  bool done_ = false;
};

std::vector<LayerMask> eligible_masks(int d_in, int d_out);

using BigInt = boost::multiprecision::cpp_int;

/// Number of multisets of d_out nonzero d_in-bit rows covering every column.
BigInt count_eligible_big(int d_in, int d_out);

/// Same as count_eligible_big; throws std::overflow_error beyond 64 bits.
std::uint64_t count_eligible(int d_in, int d_out);

/// Product of per-layer eligible counts for a neuron configuration.
BigInt count_model_masks(const NeuronConfig& cfg);

/// b[l]_i masked iff row i of W[l] is all zero (classifier bias included).
ModelMask bias_mask_search(ModelMask mm);

/// b[l]_i masked iff column i of W[l+1] is all zero, l in {1,2,3};
/// classifier bias always unmasked.
ModelMask bias_mask_pruning(ModelMask mm);

ModelMask apply_bias_rule(ModelMask mm, BiasRule rule);

std::int64_t weight_nnz(const ModelMask& mm);
std::int64_t bias_nnz(const ModelMask& mm);
std::int64_t nnz(const ModelMask& mm, bool include_bias);

/// Mask line format: layers separated by '|', rows by ';', bits as 0/1.
/// Bias masks are not part of the line; the reader applies `rule`.
std::string format_mask_line(const ModelMask& mm);
ModelMask parse_mask_line(std::string_view line, BiasRule rule);

}  // namespace sparsest
