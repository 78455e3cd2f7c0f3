#include "sparsest/checkpoint.hpp"

#include <cstdlib>

#include "json.hpp"

#include "sparsest/bytes.hpp"

namespace sparsest {
namespace {

constexpr std::string_view kCheckpointMagic = "MLPCKPT1";

void write_bits(ByteWriter& w, const std::vector<std::uint8_t>& bits) {
  std::uint8_t acc = 0;
  int n = 0;
  for (std::uint8_t b : bits) {
    acc = static_cast<std::uint8_t>(acc | ((b ? 1 : 0) << (7 - n)));
    if (++n == 8) {
      w.u8(acc);
      acc = 0;
      n = 0;
    }
  }
  if (n > 0) w.u8(acc);
}

std::vector<std::uint8_t> read_bits(ByteReader& r, std::size_t count) {
  std::vector<std::uint8_t> bits(count);
  std::uint8_t byte = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (i % 8 == 0) byte = r.u8();
    bits[i] = (byte >> (7 - i % 8)) & 1;
  }
  return bits;
}

void write_params(ByteWriter& w, const Params& p) {
  for (const auto& L : p) {
    for (double v : L.w) w.f64(v);
    for (double v : L.b) w.f64(v);
  }
}

void read_params(ByteReader& r, Params& p) {
  for (auto& L : p) {
    for (double& v : L.w) v = r.f64();
    for (double& v : L.b) v = r.f64();
  }
}

LayerMask mask_from_bits(int rows, int cols, const std::vector<std::uint8_t>& bits) {
  LayerMask m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m.set(r, c, bits[static_cast<std::size_t>(r) * cols + c] != 0);
    }
  }
  return m;
}

nlohmann::json params_json(const Params& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : p) {
    nlohmann::json w = nlohmann::json::array(), b = nlohmann::json::array();
    for (double v : L.w) w.push_back(exact_decimal(v));
    for (double v : L.b) b.push_back(exact_decimal(v));
    layers.push_back({{"rows", L.rows}, {"cols", L.cols}, {"w", w}, {"b", b}});
  }
  return layers;
}

void params_from_json(const nlohmann::json& j, Params& p) {
  if (!j.is_array() || j.size() != kDepth) throw FormatError("expected 4 layers");
  for (int l = 0; l < kDepth; ++l) {
    const auto& jl = j[static_cast<std::size_t>(l)];
    auto& L = p[l];
    if (jl.at("rows").get<int>() != L.rows || jl.at("cols").get<int>() != L.cols ||
        jl.at("w").size() != L.w.size() || jl.at("b").size() != L.b.size()) {
      throw FormatError("layer shape mismatch in JSON checkpoint");
    }
    for (std::size_t i = 0; i < L.w.size(); ++i) {
      L.w[i] = std::strtod(jl["w"][i].get<std::string>().c_str(), nullptr);
    }
    for (std::size_t i = 0; i < L.b.size(); ++i) {
      L.b[i] = std::strtod(jl["b"][i].get<std::string>().c_str(), nullptr);
    }
  }
}

}  // namespace

std::vector<std::uint8_t> to_bytes(const Checkpoint& ck) {
  const MaskedMlp& m = ck.model;
  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(kDepth);
  w.u32(static_cast<std::uint32_t>(m.arch.width));
  w.u64(m.seed);
  for (const auto& L : m.params) {
    w.u32(static_cast<std::uint32_t>(L.rows));
    w.u32(static_cast<std::uint32_t>(L.cols));
    for (double v : L.w) w.f64(v);
    for (double v : L.b) w.f64(v);
  }
  for (const auto& lm : m.mask.weights) write_bits(w, lm.bits());
  for (const auto& bm : m.mask.bias) write_bits(w, bm);
  w.u8(ck.momentum ? 1 : 0);
  if (ck.momentum) write_params(w, *ck.momentum);
  w.u32(static_cast<std::uint32_t>(m.mask.provenance.size()));
  w.raw(m.mask.provenance);
  return std::move(w.bytes());
}

Checkpoint from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect(kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  if (r.u32() != kDepth) throw FormatError("checkpoint depth must be 4");
  const auto width = static_cast<int>(r.u32());
  if (width < 1 || width > 1 << 16) throw FormatError("implausible width");
  Checkpoint ck;
  MaskedMlp& m = ck.model;
  m.arch.width = width;
  m.seed = r.u64();
  m.params = zero_params(m.arch);
  for (auto& L : m.params) {
    if (static_cast<int>(r.u32()) != L.rows || static_cast<int>(r.u32()) != L.cols) {
      throw FormatError("layer shape mismatch");
    }
    for (double& v : L.w) v = r.f64();
    for (double& v : L.b) v = r.f64();
  }
  for (int l = 0; l < kDepth; ++l) {
    const auto& L = m.params[l];
    m.mask.weights[l] = mask_from_bits(L.rows, L.cols, read_bits(r, L.w.size()));
  }
  for (int l = 0; l < kDepth; ++l) m.mask.bias[l] = read_bits(r, m.params[l].b.size());
  if (r.u8()) {
    ck.momentum = zero_params(m.arch);
    read_params(r, *ck.momentum);
  }
  const std::uint32_t plen = r.u32();
  for (std::uint32_t i = 0; i < plen; ++i) {
    m.mask.provenance.push_back(static_cast<char>(r.u8()));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_bytes(path, to_bytes(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return from_bytes(read_file_bytes(path));
}

std::string to_json(const Checkpoint& ck) {
  const MaskedMlp& m = ck.model;
  nlohmann::json j;
  j["format"] = "MLPCKPT1";
  j["version"] = kCheckpointVersion;
  j["width"] = m.arch.width;
  j["seed"] = std::to_string(m.seed);
  j["params"] = params_json(m.params);
  nlohmann::json masks = nlohmann::json::array(), biases = nlohmann::json::array();
  for (int l = 0; l < kDepth; ++l) {
    std::string wb, bb;
    for (auto b : m.mask.weights[l].bits()) wb += b ? '1' : '0';
    for (auto b : m.mask.bias[l]) bb += b ? '1' : '0';
    masks.push_back(wb);
    biases.push_back(bb);
  }
  j["weight_masks"] = masks;
  j["bias_masks"] = biases;
  j["provenance"] = m.mask.provenance;
  if (ck.momentum) j["momentum"] = params_json(*ck.momentum);
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("format") != "MLPCKPT1") throw FormatError("not a checkpoint dump");
  Checkpoint ck;
  MaskedMlp& m = ck.model;
  m.arch.width = j.at("width").get<int>();
  m.seed = std::stoull(j.at("seed").get<std::string>());
  m.params = zero_params(m.arch);
  params_from_json(j.at("params"), m.params);
  for (int l = 0; l < kDepth; ++l) {
    const auto& L = m.params[l];
    const std::string wb = j.at("weight_masks")[static_cast<std::size_t>(l)];
    const std::string bb = j.at("bias_masks")[static_cast<std::size_t>(l)];
    if (wb.size() != L.w.size() || bb.size() != L.b.size()) {
      throw FormatError("mask size mismatch in JSON checkpoint");
    }
    std::vector<std::uint8_t> bits(wb.size()), bias(bb.size());
    for (std::size_t i = 0; i < wb.size(); ++i) bits[i] = wb[i] == '1';
    for (std::size_t i = 0; i < bb.size(); ++i) bias[i] = bb[i] == '1';
    m.mask.weights[l] = mask_from_bits(L.rows, L.cols, bits);
    m.mask.bias[l] = std::move(bias);
  }
  m.mask.provenance = j.value("provenance", "");
  if (j.contains("momentum")) {
    ck.momentum = zero_params(m.arch);
    params_from_json(j["momentum"], *ck.momentum);
  }
  return ck;
}

}  // namespace sparsest
