#include "tbnet/model_io.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "tbnet/errors.hpp"
#include "tbnet/half.hpp"

namespace tbnet {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'B', 'W', '1'};
constexpr int kFormatVersion = 1;

std::string act_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::swish: return "swish";
    case Activation::hard_swish: return "hard_swish";
    case Activation::identity: return "identity";
  }
  return "relu";
}

Activation act_from_name(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "swish") return Activation::swish;
  if (s == "hard_swish") return Activation::hard_swish;
  if (s == "identity") return Activation::identity;
  throw FormatError(FormatError::Kind::bad_manifest,
                    "unknown activation: " + s);
}

json spec_to_json(const ModelSpec& s) {
  json blocks = json::array();
  for (const auto& b : s.blocks) {
    blocks.push_back({{"in", b.in_channels},
                      {"out", b.out_channels},
                      {"expansion", b.expansion},
                      {"kernel", b.kernel},
                      {"stride", b.stride},
                      {"use_se", b.use_se},
                      {"se_reduction", b.se_reduction},
                      {"activation", act_name(b.activation)}});
  }
  return json{{"preset", s.preset},
              {"in_channels", s.in_channels},
              {"stem_width", s.stem_width},
              {"stem_stride", s.stem_stride},
              {"blocks", blocks},
              {"head_conv_width", s.head_conv_width},
              {"head_hidden", s.head_hidden},
              {"num_classes", s.num_classes},
              {"hard_swish", s.hard_swish}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.preset = j.at("preset").get<std::string>();
  s.in_channels = j.at("in_channels").get<int>();
  s.stem_width = j.at("stem_width").get<int>();
  s.stem_stride = j.at("stem_stride").get<int>();
  s.head_conv_width = j.at("head_conv_width").get<int>();
  s.head_hidden = j.at("head_hidden").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.hard_swish = j.at("hard_swish").get<bool>();
  for (const auto& b : j.at("blocks")) {
    BottleneckSpec bs;
    bs.in_channels = b.at("in").get<int>();
    bs.out_channels = b.at("out").get<int>();
    bs.expansion = b.at("expansion").get<int>();
    bs.kernel = b.at("kernel").get<int>();
    bs.stride = b.at("stride").get<int>();
    bs.use_se = b.at("use_se").get<bool>();
    bs.se_reduction = b.at("se_reduction").get<int>();
    bs.activation = act_from_name(b.at("activation").get<std::string>());
    s.blocks.push_back(bs);
  }
  return s;
}

struct Entry {
  std::string name;
  DType dtype;
  const Tensor* tensor;
};

void append_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::string tensor_bytes(const Tensor& t, DType dtype) {
  std::string bytes;
  if (dtype == DType::f16) {
    bytes.reserve(static_cast<std::size_t>(t.numel()) * 2);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      const std::uint16_t h = float_to_half_bits(t.data[i]);
      bytes.push_back(static_cast<char>(h & 0xFF));
      bytes.push_back(static_cast<char>((h >> 8) & 0xFF));
    }
  } else {
    bytes.reserve(static_cast<std::size_t>(t.numel()) * 4);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      std::uint32_t u;
      std::memcpy(&u, &t.data[i], 4);
      append_u32le(bytes, u);
    }
  }
  return bytes;
}

void bytes_to_tensor(const std::string& bytes, DType dtype, Tensor& t) {
  const std::size_t elem = dtype == DType::f16 ? 2 : 4;
  if (bytes.size() != elem * static_cast<std::size_t>(t.numel())) {
    throw FormatError(FormatError::Kind::bad_manifest,
                      "payload length mismatch");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (Eigen::Index i = 0; i < t.numel(); ++i) {
    if (dtype == DType::f16) {
      const std::uint16_t h =
          static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8));
      t.data[i] = half_bits_to_float(h);
    } else {
      std::uint32_t u = static_cast<std::uint32_t>(p[4 * i]) |
                        (static_cast<std::uint32_t>(p[4 * i + 1]) << 8) |
                        (static_cast<std::uint32_t>(p[4 * i + 2]) << 16) |
                        (static_cast<std::uint32_t>(p[4 * i + 3]) << 24);
      float f;
      std::memcpy(&f, &u, 4);
      t.data[i] = f;
    }
  }
}

std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size())));
}

}  // namespace

std::string spec_to_json_string(const ModelSpec& spec) {
  return spec_to_json(spec).dump(2);
}

ModelSpec spec_from_json_string(const std::string& text) {
  return spec_from_json(json::parse(text));
}

void save_model(Model<float>& model, const std::string& path,
                const OptimizerState<float>* optimizer) {
  std::vector<Entry> entries;
  std::vector<ParamRef<float>> params;
  std::vector<BufferRef<float>> buffers;
  model.collect(params, buffers);
  for (auto& p : params) {
    entries.push_back({p.name, model.precision, p.value});
  }
  for (auto& b : buffers) {
    // norm statistics stay single precision in the hybrid scheme
    entries.push_back({b.name, DType::f32, b.value});
  }
  std::map<std::string, Tensor> velocity_copies;
  if (optimizer) {
    for (const auto& [name, v] : optimizer->velocity) {
      velocity_copies.emplace("opt/" + name, v);
    }
    for (const auto& [name, v] : velocity_copies) {
      entries.push_back({name, DType::f32, &v});
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.name < b.name; });

  std::string payload;
  json manifest = json::array();
  for (const auto& e : entries) {
    const std::string bytes = tensor_bytes(*e.tensor, e.dtype);
    manifest.push_back(
        {{"name", e.name},
         {"dtype", dtype_name(e.dtype)},
         {"shape", {e.tensor->shape[0], e.tensor->shape[1],
                    e.tensor->shape[2], e.tensor->shape[3]}},
         {"byte_offset", payload.size()},
         {"byte_length", bytes.size()},
         {"checksum", crc_of(bytes)}});
    payload += bytes;
  }
  json header{{"format_version", kFormatVersion},
              {"model_spec", spec_to_json(model.spec)},
              {"tensors", manifest}};
  if (optimizer) {
    header["optimizer"] = {{"momentum", optimizer->momentum},
                           {"base_lr", optimizer->base_lr},
                           {"decay_factor", optimizer->decay_factor},
                           {"decay_period", optimizer->decay_period},
                           {"epoch", optimizer->epoch}};
  }
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path);
  out.write(kMagic, 4);
  std::string len;
  append_u32le(len, static_cast<std::uint32_t>(header_text.size()));
  out.write(len.data(), 4);
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "write failure: " + path);
}

LoadResult load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic,
                      "bad magic in " + path);
  }
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  if (in.gcount() != 4) {
    throw FormatError(FormatError::Kind::truncated, "truncated header");
  }
  const std::uint32_t header_len =
      lenb[0] | (lenb[1] << 8) | (lenb[2] << 16)
      | (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), header_len);
  if (static_cast<std::uint32_t>(in.gcount()) != header_len) {
    throw FormatError(FormatError::Kind::truncated, "truncated header");
  }
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest,
                      std::string("malformed header JSON: ") + e.what());
  }
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  try {
    if (header.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError(
          FormatError::Kind::version_mismatch,
          "unsupported format_version " +
              std::to_string(header.at("format_version").get<int>()));
    }
    struct ManEntry {
      std::string name;
      DType dtype;
      std::array<Eigen::Index, 4> shape;
      std::size_t offset, length;
      std::uint32_t crc;
    };
    std::map<std::string, ManEntry> man;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const auto& t : header.at("tensors")) {
      ManEntry e;
      e.name = t.at("name").get<std::string>();
      const std::string d = t.at("dtype").get<std::string>();
      if (d == "f32") {
        e.dtype = DType::f32;
      } else if (d == "f16") {
        e.dtype = DType::f16;
      } else {
        throw FormatError(FormatError::Kind::unknown_dtype,
                          "unknown dtype tag \"" + d + "\" for " + e.name);
      }
      const auto& sh = t.at("shape");
      for (int i = 0; i < 4; ++i) e.shape[i] = sh.at(i).get<Eigen::Index>();
      e.offset = t.at("byte_offset").get<std::size_t>();
      e.length = t.at("byte_length").get<std::size_t>();
      e.crc = t.at("checksum").get<std::uint32_t>();
      if (e.offset + e.length > payload.size()) {
        throw FormatError(FormatError::Kind::truncated,
                          "tensor " + e.name + " extends past payload end");
      }
      ranges.emplace_back(e.offset, e.offset + e.length);
      if (!man.emplace(e.name, e).second) {
        throw FormatError(FormatError::Kind::bad_manifest,
                          "duplicate tensor name " + e.name);
      }
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
      if (ranges[i].first < ranges[i - 1].second) {
        throw FormatError(FormatError::Kind::bad_manifest,
                          "overlapping tensor payloads");
      }
    }
    for (const auto& [name, e] : man) {
      const std::string bytes = payload.substr(e.offset, e.length);
      if (crc_of(bytes) != e.crc) {
        throw FormatError(FormatError::Kind::checksum,
                          "checksum failure for tensor " + name);
      }
    }

    LoadResult result{build_model<float>(spec_from_json(header.at("model_spec")),
                                         0),
                      std::nullopt};
    bool any_f16 = false;
    std::vector<ParamRef<float>> params;
    std::vector<BufferRef<float>> buffers;
    result.model.collect(params, buffers);
    auto fill = [&](const std::string& name, Tensor& dst) {
      auto it = man.find(name);
      if (it == man.end()) {
        throw FormatError(FormatError::Kind::bad_manifest,
                          "missing tensor " + name);
      }
      const ManEntry& e = it->second;
      if (e.shape != dst.shape) {
        throw FormatError(FormatError::Kind::bad_manifest,
                          "shape mismatch for " + name);
      }
      bytes_to_tensor(payload.substr(e.offset, e.length), e.dtype, dst);
      dst.dtype = e.dtype;
      if (e.dtype == DType::f16) any_f16 = true;
      man.erase(it);
    };
    for (auto& p : params) fill(p.name, *p.value);
    for (auto& b : buffers) fill(b.name, *b.value);
    if (header.contains("optimizer")) {
      OptimizerState<float> opt;
      const auto& o = header.at("optimizer");
      opt.momentum = o.at("momentum").get<float>();
      opt.base_lr = o.at("base_lr").get<float>();
      opt.decay_factor = o.at("decay_factor").get<float>();
      opt.decay_period = o.at("decay_period").get<int>();
      opt.epoch = o.at("epoch").get<int>();
      for (auto& p : result.model.params()) {
        auto it = man.find("opt/" + p.name);
        if (it == man.end()) continue;
        const std::string key = it->first;
        Tensor v(it->second.shape[0], it->second.shape[1],
                 it->second.shape[2], it->second.shape[3]);
        fill(key, v);
        opt.velocity.emplace(p.name, std::move(v));
      }
      result.optimizer = std::move(opt);
    }
    if (!man.empty()) {
      throw FormatError(FormatError::Kind::bad_manifest,
                        "unexpected tensor " + man.begin()->first);
    }
    result.model.precision = any_f16 ? DType::f16 : DType::f32;
    return result;
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest,
                      std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace tbnet
