#include "sparsest/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

#include "sparsest/analysis.hpp"

namespace sparsest {
namespace {

constexpr Rgb kBlue{31, 104, 196};
constexpr Rgb kOrange{238, 124, 20};
constexpr Rgb kWhite{255, 255, 255};

constexpr double kTile = 48.0;
constexpr double kOutTile = 96.0;
constexpr double kGapY = 20.0;
constexpr double kColumnStep = 190.0;
constexpr double kMargin = 30.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // Avoid "-0.00" so negated layouts format identically.
  if (std::string_view(buf) == "-0.00") return "0.00";
  return buf;
}

// Per-point forward pass writing every layer's post-activation.
class GridForward {
 public:
  explicit GridForward(const MaskedMlp& m) : m_(m) {
    for (int l = 0; l < kDepth; ++l) h_[l].assign(static_cast<std::size_t>(m.arch.rows(l)), 0.0);
  }

  double run(double x, double y) {
    const double in[2] = {x, y};
    const double* prev = in;
    double logit = 0.0;
    for (int l = 0; l < kDepth; ++l) {
      const Layer& L = m_.params[l];
      for (int r = 0; r < L.rows; ++r) {
        double acc = L.b[static_cast<std::size_t>(r)];
        const double* row = L.w.data() + static_cast<std::size_t>(r) * L.cols;
        for (int c = 0; c < L.cols; ++c) acc += row[c] * prev[c];
        if (l == kDepth - 1) logit = acc;
        h_[l][static_cast<std::size_t>(r)] = acc > 0.0 ? acc : 0.0;
      }
      prev = h_[l].data();
    }
    return logit;
  }

  const std::vector<double>& hidden(int l) const { return h_[l]; }

 private:
  const MaskedMlp& m_;
  std::array<std::vector<double>, kDepth> h_;
};

void check_model(const MaskedMlp& m, const VizSpec& spec) {
  if (spec.grid < 2) throw std::invalid_argument("grid must have at least 2 points per side");
  if (!(spec.extent > 0.0)) throw std::invalid_argument("extent must be positive");
  for (const auto& L : m.params) {
    for (double v : L.w) {
      if (!std::isfinite(v)) throw NumericError("non-finite parameter");
    }
    for (double v : L.b) {
      if (!std::isfinite(v)) throw NumericError("non-finite parameter");
    }
  }
}

std::string png_uri(int w, int h, const std::vector<Rgb>& px) {
  return "data:image/png;base64," + base64(encode_png(w, h, px));
}

std::vector<Rgb> heat_pixels(const std::vector<float>& values) {
  float mx = 0.0f;
  for (float v : values) mx = std::max(mx, std::abs(v));
  std::vector<Rgb> px(values.size(), kWhite);
  if (mx > 0.0f) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      px[i] = diverging_color(static_cast<double>(values[i]) / static_cast<double>(mx));
    }
  }
  return px;
}

std::uint32_t be32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void png_chunk(std::vector<std::uint8_t>& out, const char* type,
               const std::vector<std::uint8_t>& data) {
  const std::uint32_t len = be32(static_cast<std::uint32_t>(data.size()));
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + 4);
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  const std::uint32_t c = be32(static_cast<std::uint32_t>(crc));
  const auto* cp = reinterpret_cast<const std::uint8_t*>(&c);
  out.insert(out.end(), cp, cp + 4);
}

}  // namespace

Rgb diverging_color(double v) {
  if (std::isnan(v)) v = 0.0;
  v = std::clamp(v, -1.0, 1.0);
  const double t = std::abs(v);
  const Rgb& hue = v > 0.0 ? kBlue : kOrange;
  const auto mix = [t](std::uint8_t target) {
    return static_cast<std::uint8_t>(std::lround(255.0 + t * (static_cast<double>(target) - 255.0)));
  };
  return {mix(hue.r), mix(hue.g), mix(hue.b)};
}

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

double grid_coord(const VizSpec& spec, int i) {
  const int n = spec.grid;
  return spec.extent * static_cast<double>(2 * i - (n - 1)) / static_cast<double>(n - 1);
}

std::vector<double> logit_grid_serial(const MaskedMlp& m, const VizSpec& spec) {
  check_model(m, spec);
  const int n = spec.grid;
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  GridForward f(m);
  for (int row = 0; row < n; ++row) {
    const double y = grid_coord(spec, n - 1 - row);
    for (int col = 0; col < n; ++col) {
      out[static_cast<std::size_t>(row) * n + col] = f.run(grid_coord(spec, col), y);
    }
  }
  return out;
}

std::vector<double> logit_grid(const MaskedMlp& m, const VizSpec& spec) {
  check_model(m, spec);
  const int n = spec.grid;
  std::vector<double> out(static_cast<std::size_t>(n) * n);
#pragma omp parallel
  {
    GridForward f(m);
#pragma omp for schedule(static)
    for (int row = 0; row < n; ++row) {
      const double y = grid_coord(spec, n - 1 - row);
      for (int col = 0; col < n; ++col) {
        out[static_cast<std::size_t>(row) * n + col] = f.run(grid_coord(spec, col), y);
      }
    }
  }
  return out;
}

ActivationGrids activation_grids(const MaskedMlp& m, const VizSpec& spec) {
  check_model(m, spec);
  const int n = spec.grid;
  const auto cells = static_cast<std::size_t>(n) * n;
  ActivationGrids g;
  g.inputs[0].resize(cells);
  g.inputs[1].resize(cells);
  for (int l = 0; l < kDepth - 1; ++l) {
    g.hidden[l].assign(static_cast<std::size_t>(m.arch.rows(l)), std::vector<double>(cells));
  }
  g.output.resize(cells);
#pragma omp parallel
  {
    GridForward f(m);
#pragma omp for schedule(static)
    for (int row = 0; row < n; ++row) {
      const double y = grid_coord(spec, n - 1 - row);
      for (int col = 0; col < n; ++col) {
        const auto i = static_cast<std::size_t>(row) * n + col;
        const double x = grid_coord(spec, col);
        g.output[i] = f.run(x, y);
        g.inputs[0][i] = x;
        g.inputs[1][i] = y;
        for (int l = 0; l < kDepth - 1; ++l) {
          for (std::size_t r = 0; r < g.hidden[l].size(); ++r) g.hidden[l][r][i] = f.hidden(l)[r];
        }
      }
    }
  }
  return g;
}

std::vector<std::uint8_t> decision_raster(const MaskedMlp& m, const VizSpec& spec) {
  const auto logits = logit_grid(m, spec);
  std::vector<std::uint8_t> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] > 0.0 ? 1 : 0;
  return out;
}

std::string render(const MaskedMlp& m, const VizSpec& spec, RenderStats* stats) {
  if (m.arch.width > spec.max_width) {
    throw std::invalid_argument("width " + std::to_string(m.arch.width) +
                                " exceeds the layout limit of " + std::to_string(spec.max_width));
  }
  check_model(m, spec);

  // Edges follow the support: unmasked weights with a nonzero value.
  ModelMask support = empty_mask(m.arch.width);
  for (int l = 0; l < kDepth; ++l) {
    const Layer& L = m.params[l];
    for (int r = 0; r < L.rows; ++r) {
      for (int c = 0; c < L.cols; ++c) {
        if (m.mask.weights[l](r, c) && L.at(r, c) != 0.0) support.weights[l].set(r, c, true);
      }
    }
  }
  const EffectiveMask eff = effective_mask(support);

  // Neuron columns 0..4; visible neurons per column and whether they are live.
  std::array<std::vector<int>, kDepth + 1> shown;
  std::array<std::vector<std::uint8_t>, kDepth + 1> live;
  shown[0] = {0, 1};
  live[0] = {1, 1};
  for (int l = 1; l < kDepth; ++l) {
    const auto& dead = eff.dead_neurons[l - 1];
    for (int i = 0; i < m.arch.width; ++i) {
      const bool alive = !std::binary_search(dead.begin(), dead.end(), i);
      if (alive || spec.include_dead) {
        shown[l].push_back(i);
        live[l].push_back(alive ? 1 : 0);
      }
    }
  }
  shown[kDepth] = {0};
  live[kDepth] = {1};

  // Activation rasters for the visible tiles.
  const int n = spec.grid;
  const auto cells = static_cast<std::size_t>(n) * n;
  std::array<std::vector<std::vector<float>>, kDepth + 1> act;
  for (int l = 0; l <= kDepth; ++l) {
    act[l].assign(shown[l].size(), std::vector<float>(cells, 0.0f));
  }
#pragma omp parallel
  {
    GridForward f(m);
#pragma omp for schedule(static)
    for (int row = 0; row < n; ++row) {
      const double y = grid_coord(spec, n - 1 - row);
      for (int col = 0; col < n; ++col) {
        const auto i = static_cast<std::size_t>(row) * n + col;
        const double x = grid_coord(spec, col);
        act[kDepth][0][i] = static_cast<float>(f.run(x, y));
        act[0][0][i] = static_cast<float>(x);
        act[0][1][i] = static_cast<float>(y);
        for (int l = 1; l < kDepth; ++l) {
          for (std::size_t k = 0; k < shown[l].size(); ++k) {
            act[l][k][i] = static_cast<float>(f.hidden(l - 1)[static_cast<std::size_t>(shown[l][k])]);
          }
        }
      }
    }
  }

  // Layout.
  std::array<double, kDepth + 1> column_height{};
  double height = 0.0;
  for (int l = 0; l <= kDepth; ++l) {
    const double t = l == kDepth ? kOutTile : kTile;
    const auto k = static_cast<double>(shown[l].size());
    column_height[l] = k > 0 ? k * t + (k - 1) * kGapY : 0.0;
    height = std::max(height, column_height[l]);
  }
  const double svg_w = 2 * kMargin + kDepth * kColumnStep + kOutTile;
  const double svg_h = 2 * kMargin + height;
  const auto tile_size = [](int l) { return l == kDepth ? kOutTile : kTile; };
  const auto tile_x = [](int l) { return kMargin + l * kColumnStep; };
  const auto tile_y = [&](int l, std::size_t k) {
    const double t = tile_size(l);
    return kMargin + (height - column_height[l]) / 2.0 + static_cast<double>(k) * (t + kGapY);
  };
  std::array<std::vector<int>, kDepth + 1> slot;  // neuron -> position in column
  for (int l = 0; l <= kDepth; ++l) {
    const int count = l == 0 ? kInputDim : m.arch.rows(l - 1);
    slot[l].assign(static_cast<std::size_t>(count), -1);
    for (std::size_t k = 0; k < shown[l].size(); ++k) slot[l][static_cast<std::size_t>(shown[l][k])] = static_cast<int>(k);
  }

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(svg_w) << "\" height=\""
     << fmt(svg_h) << "\" viewBox=\"0 0 " << fmt(svg_w) << ' ' << fmt(svg_h) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  // Edges first so tiles sit on top.
  RenderStats st;
  os << "<g fill=\"none\">\n";
  for (int l = 0; l < kDepth; ++l) {
    const Layer& L = m.params[l];
    double max_abs = 0.0;
    for (double v : L.w) max_abs = std::max(max_abs, std::abs(v));
    for (int r = 0; r < L.rows; ++r) {
      for (int c = 0; c < L.cols; ++c) {
        if (!support.weights[l](r, c)) continue;
        const bool effective = eff.weights[l](r, c);
        if (!effective && !spec.include_dead) continue;
        const int src = slot[l][static_cast<std::size_t>(c)];
        const int dst = slot[l + 1][static_cast<std::size_t>(r)];
        if (src < 0 || dst < 0) continue;
        const double w = L.at(r, c);
        const double x0 = tile_x(l) + tile_size(l);
        const double y0 = tile_y(l, static_cast<std::size_t>(src)) + tile_size(l) / 2.0;
        const double x1 = tile_x(l + 1);
        const double y1 = tile_y(l + 1, static_cast<std::size_t>(dst)) + tile_size(l + 1) / 2.0;
        const double mid = (x0 + x1) / 2.0;
        const double stroke = std::max(0.5, 4.0 * std::abs(w) / max_abs);
        os << "<path class=\"edge\" d=\"M" << fmt(x0) << ' ' << fmt(y0) << " C" << fmt(mid) << ' '
           << fmt(y0) << ' ' << fmt(mid) << ' ' << fmt(y1) << ' ' << fmt(x1) << ' ' << fmt(y1)
           << "\" stroke=\"" << hex(w > 0.0 ? kBlue : kOrange) << "\" stroke-width=\""
           << fmt(stroke) << '"' << (effective ? "" : " stroke-opacity=\"0.25\"") << "/>\n";
        ++st.edges;
      }
    }
  }
  os << "</g>\n";

  for (int l = 0; l <= kDepth; ++l) {
    double bias_max = 0.0;
    if (l > 0) {
      for (double b : m.params[l - 1].b) bias_max = std::max(bias_max, std::abs(b));
    }
    for (std::size_t k = 0; k < shown[l].size(); ++k) {
      const int neuron = shown[l][k];
      const double x = tile_x(l), y = tile_y(l, k), t = tile_size(l);
      const char* kind = l == 0 ? "input" : (l == kDepth ? "output" : "hidden");
      if (l == 0) ++st.input_tiles;
      else if (l == kDepth) ++st.output_tiles;
      else ++st.hidden_tiles;
      os << "<g class=\"tile " << kind << "\" data-layer=\"" << l << "\" data-neuron=\"" << neuron
         << '"' << (live[l][k] ? "" : " opacity=\"0.35\"") << ">\n";
      os << "<image x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(t)
         << "\" height=\"" << fmt(t) << "\" preserveAspectRatio=\"none\" href=\""
         << png_uri(n, n, heat_pixels(act[l][k])) << "\"/>\n";
      os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(t)
         << "\" height=\"" << fmt(t) << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"0.5\"/>\n";
      if (l > 0) {
        const Layer& L = m.params[l - 1];
        const bool masked = !m.mask.bias[l - 1][static_cast<std::size_t>(neuron)];
        const double b = L.b[static_cast<std::size_t>(neuron)];
        const Rgb fill = bias_max > 0.0 ? diverging_color(b / bias_max) : kWhite;
        os << "<rect class=\"bias\" x=\"" << fmt(x - 4.0) << "\" y=\"" << fmt(y - 4.0)
           << "\" width=\"10.00\" height=\"10.00\" fill=\"" << hex(fill) << "\" stroke=\""
           << (masked ? "#bbbbbb" : "#444444") << "\" stroke-width=\"0.5\"/>\n";
      }
      os << "</g>\n";
    }
  }
  os << "</svg>\n";
  if (stats) *stats = st;

  if (!spec.html) return os.str();
  return "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>sparse model</title>\n"
         "</head>\n<body>\n" +
         os.str() + "</body>\n</html>\n";
}

std::string render_dataset_overlay(const MaskedMlp& m, const Dataset& data, const VizSpec& spec) {
  const auto raster = decision_raster(m, spec);
  const Rgb pos = diverging_color(0.35), neg = diverging_color(-0.35);
  std::vector<Rgb> px(raster.size());
  for (std::size_t i = 0; i < raster.size(); ++i) px[i] = raster[i] ? pos : neg;
  const double size = 512.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"512.00\" height=\"512.00\" "
        "viewBox=\"0 0 512.00 512.00\">\n";
  os << "<image x=\"0.00\" y=\"0.00\" width=\"512.00\" height=\"512.00\" "
        "preserveAspectRatio=\"none\" href=\""
     << png_uri(spec.grid, spec.grid, px) << "\"/>\n";
  // Thin the overlay to at most ~5000 markers; the raster carries the detail.
  const std::size_t stride = std::max<std::size_t>(1, (data.size() + 4999) / 5000);
  os << "<g stroke=\"#ffffff\" stroke-width=\"0.3\">\n";
  for (std::size_t i = 0; i < data.size(); i += stride) {
    const double cx = (data.xs[i].x + spec.extent) / (2.0 * spec.extent) * size;
    const double cy = (spec.extent - data.xs[i].y) / (2.0 * spec.extent) * size;
    os << "<circle class=\"point\" cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy)
       << "\" r=\"1.50\" fill=\"" << hex(data.ys[i] ? kBlue : kOrange) << "\"/>\n";
  }
  os << "</g>\n</svg>\n";
  if (!spec.html) return os.str();
  return "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>decision region</title>\n"
         "</head>\n<body>\n" +
         os.str() + "</body>\n</html>\n";
}

std::vector<std::uint8_t> encode_png(int width, int height, const std::vector<Rgb>& pixels) {
  if (width < 1 || height < 1 ||
      pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("pixel buffer does not match the image size");
  }
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * static_cast<std::size_t>(width)));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < width; ++x) {
      const Rgb& p = pixels[static_cast<std::size_t>(y) * width + x];
      raw.push_back(p.r);
      raw.push_back(p.g);
      raw.push_back(p.b);
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("zlib compression failed");
  }
  z.resize(zlen);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr(13, 0);
  const std::uint32_t w = be32(static_cast<std::uint32_t>(width));
  const std::uint32_t h = be32(static_cast<std::uint32_t>(height));
  std::memcpy(ihdr.data(), &w, 4);
  std::memcpy(ihdr.data() + 4, &h, 4);
  ihdr[8] = 8;  // bit depth
  ihdr[9] = 2;  // truecolor
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", z);
  png_chunk(out, "IEND", {});
  return out;
}

std::string base64(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                            (static_cast<std::uint32_t>(bytes[i + 1]) << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

}  // namespace sparsest
