#include "textcond/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace textcond {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'T', 'C', 'G', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  const unsigned char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::kMalformed, "checkpoint: truncated file");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }

  double f64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

json header_for(const Checkpoint& ck) {
  const auto& d = ck.params.dims;
  json h;
  h["dims"] = {{"vocab", d.vocab}, {"embed", d.embed}, {"hidden", d.hidden},
               {"image_embed", d.image_embed}, {"raw", d.raw}};
  h["mode"] = {{"variant", std::string(variant_name(ck.mode.variant))},
               {"n", ck.mode.n},
               {"transfer", std::string(transfer_name(ck.mode.transfer))}};
  h["vocab"] = ck.vocab.words();
  h["full_tensor"] = ck.params.full_tensor.has_value();
  json tensors = json::array();
  for (const auto& t : ck.params.tensors()) {
    tensors.push_back({{"name", std::string(t.name)}, {"size", t.values.size()}});
  }
  h["tensors"] = std::move(tensors);
  if (ck.optimizer) {
    std::vector<std::uint64_t> steps;
    for (const auto& s : ck.optimizer->slots) steps.push_back(s.steps);
    h["optimizer"] = {{"kind", "adam"}, {"steps", steps}};
  } else {
    h["optimizer"] = nullptr;
  }
  json losses = json::array();
  for (const auto& r : ck.meta.losses) losses.push_back({r.iteration, r.stage, r.loss});
  h["meta"] = {{"iteration", ck.meta.iteration}, {"seed", ck.meta.seed}, {"losses", std::move(losses)}};
  return h;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  ck.params.validate();
  const std::string header = header_for(ck).dump();
  std::string out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& t : ck.params.tensors()) {
    for (double v : t.values) put_f64(out, v);
  }
  if (ck.optimizer) {
    const auto tensors = ck.params.tensors();
    if (ck.optimizer->slots.size() != tensors.size()) {
      throw std::invalid_argument("serialize_checkpoint: optimizer state does not match parameters");
    }
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      const auto& slot = ck.optimizer->slots[t];
      if (slot.m.size() != tensors[t].values.size() || slot.v.size() != tensors[t].values.size()) {
        throw std::invalid_argument("serialize_checkpoint: optimizer slot shape mismatch");
      }
      for (double v : slot.m) put_f64(out, v);
      for (double v : slot.v) put_f64(out, v);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(4), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "checkpoint: bad magic, expected TCG1");
  }
  const std::uint32_t version = in.u32();
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::kBadVersion,
                      "checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t header_len = in.u32();
  const auto* hp = in.take(header_len);

  Checkpoint ck;
  try {
    const json h = json::parse(std::string(reinterpret_cast<const char*>(hp), header_len));
    ModelDims d;
    d.vocab = h.at("dims").at("vocab").get<std::size_t>();
    d.embed = h.at("dims").at("embed").get<std::size_t>();
    d.hidden = h.at("dims").at("hidden").get<std::size_t>();
    d.image_embed = h.at("dims").at("image_embed").get<std::size_t>();
    d.raw = h.at("dims").at("raw").get<std::size_t>();
    ck.mode.variant = parse_variant(h.at("mode").at("variant").get<std::string>());
    ck.mode.n = h.at("mode").at("n").get<std::size_t>();
    ck.mode.transfer = parse_transfer(h.at("mode").at("transfer").get<std::string>());
    ck.vocab = Vocabulary(h.at("vocab").get<std::vector<std::string>>());
    if (ck.vocab.size() != d.vocab) {
      throw FormatError(FormatError::Kind::kDimMismatch, "checkpoint: vocabulary size disagrees with dims");
    }
    ck.params = ModelParams::zeros(d, h.at("full_tensor").get<bool>());

    auto tensors = ck.params.tensors();
    const auto& listed = h.at("tensors");
    if (listed.size() != tensors.size()) {
      throw FormatError(FormatError::Kind::kDimMismatch, "checkpoint: tensor count mismatch");
    }
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (listed[t].at("name").get<std::string>() != tensors[t].name ||
          listed[t].at("size").get<std::size_t>() != tensors[t].values.size()) {
        throw FormatError(FormatError::Kind::kDimMismatch,
                          "checkpoint: tensor " + std::string(tensors[t].name) + " has unexpected shape");
      }
      for (auto& v : tensors[t].values) v = in.f64();
    }

    if (!h.at("optimizer").is_null()) {
      const auto steps = h.at("optimizer").at("steps").get<std::vector<std::uint64_t>>();
      if (steps.size() != tensors.size()) {
        throw FormatError(FormatError::Kind::kDimMismatch, "checkpoint: optimizer slot count mismatch");
      }
      AdamState state = AdamState::zeros_for(ck.params);
      for (std::size_t t = 0; t < tensors.size(); ++t) {
        state.slots[t].steps = steps[t];
        for (auto& v : state.slots[t].m) v = in.f64();
        for (auto& v : state.slots[t].v) v = in.f64();
      }
      ck.optimizer = std::move(state);
    }

    const auto& meta = h.at("meta");
    ck.meta.iteration = meta.at("iteration").get<std::size_t>();
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    for (const auto& r : meta.at("losses")) {
      ck.meta.losses.push_back({r.at(0).get<std::size_t>(), r.at(1).get<int>(), r.at(2).get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("checkpoint: bad header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("checkpoint: ") + e.what());
  }
  if (!in.done()) throw FormatError(FormatError::Kind::kMalformed, "checkpoint: trailing bytes");
  ck.params.validate();
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kMissingFile, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kMissingFile, "cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace textcond
