#include "textcond/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "CLI11.hpp"
#include "textcond/analysis.hpp"
#include "textcond/checkpoint.hpp"
#include "textcond/dataset.hpp"
#include "textcond/decode.hpp"
#include "textcond/errors.hpp"
#include "textcond/gradcheck.hpp"
#include "textcond/metrics.hpp"
#include "textcond/training.hpp"

namespace textcond::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- config ---------------------------------------------------------------

json categories_json(const std::vector<SynthCategory>& cats) {
  json out = json::array();
  for (const auto& c : cats) out.push_back({{"name", c.name}, {"words", c.words}, {"block_dim", c.block_dim}});
  return out;
}

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

bool compatible(const json& base, const json& value) {
  if (base.is_null()) return value.is_null() || value.is_number();
  if (base.is_number_float()) return value.is_number();
  if (base.is_number_unsigned()) return value.is_number_unsigned();
  if (base.is_number_integer()) return value.is_number_integer();
  if (base.is_boolean()) return value.is_boolean();
  if (base.is_string()) return value.is_string();
  if (base.is_array()) return value.is_array();
  return false;
}

void merge_checked(json& base, const json& patch, const json& defaults, const std::string& prefix) {
  if (!patch.is_object()) throw std::invalid_argument("config: '" + prefix + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = join_path(prefix, key);
    if (!defaults.contains(key)) throw std::invalid_argument("config: unknown key '" + path + "'");
    const json& def = defaults.at(key);
    if (def.is_object()) {
      merge_checked(base[key], value, def, path);
    } else if (!compatible(def, value)) {
      throw std::invalid_argument("config: wrong type for '" + path + "'");
    } else {
      base[key] = value;
    }
  }
}

json override_patch(const json& defaults, const std::string& path, const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);

  const json* node = &defaults;
  for (const auto& p : parts) {
    if (!node->is_object() || !node->contains(p)) throw std::invalid_argument("config: unknown key '" + path + "'");
    node = &node->at(p);
  }
  if (node->is_object()) throw std::invalid_argument("config: '" + path + "' is a section, not a value");

  json value;
  if (node->is_string()) {
    value = text;
  } else {
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      throw std::invalid_argument("config: cannot parse value '" + text + "' for '" + path + "'");
    }
  }
  json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  return patch;
}

// ---- conversions ----------------------------------------------------------

GuidanceMode mode_from(const json& m) {
  GuidanceMode mode{parse_variant(m.at("variant").get<std::string>()), m.at("n").get<std::size_t>(),
                    parse_transfer(m.at("transfer").get<std::string>())};
  mode.validate();
  return mode;
}

// "ngram:3" or "sentence"
GuidanceMode mode_from_spec(const std::string& spec, TransferKind transfer) {
  const auto colon = spec.find(':');
  GuidanceMode mode;
  mode.variant = parse_variant(spec.substr(0, colon));
  mode.n = colon == std::string::npos ? 1 : std::stoul(spec.substr(colon + 1));
  mode.transfer = transfer;
  mode.validate();
  return mode;
}

TrainConfig train_from(const json& cfg) {
  const json& t = cfg.at("train");
  TrainConfig c;
  c.lambda = t.at("lambda");
  c.lr_lm = t.at("lr_lm");
  c.lr_img = t.at("lr_img");
  c.adam_beta1 = t.at("adam_beta1");
  c.adam_beta2 = t.at("adam_beta2");
  c.adam_eps = t.at("adam_eps");
  c.batch_size = t.at("batch_size");
  const auto iters = t.at("stage_iters").get<std::vector<std::size_t>>();
  if (iters.size() != 3) throw std::invalid_argument("config: train.stage_iters needs three entries");
  std::copy(iters.begin(), iters.end(), c.stage_iters.begin());
  if (!t.at("grad_clip").is_null()) c.grad_clip = t.at("grad_clip").get<double>();
  const std::string cond_init = t.at("cond_init");
  if (cond_init == "ones") {
    c.cond_init = CondInit::kOnes;
  } else if (cond_init == "gaussian") {
    c.cond_init = CondInit::kGaussian;
  } else {
    throw std::invalid_argument("config: train.cond_init must be 'ones' or 'gaussian'");
  }
  c.shape.embed = t.at("shape").at("embed");
  c.shape.hidden = t.at("shape").at("hidden");
  c.shape.image_embed = t.at("shape").at("image_embed");
  const json& i = t.at("init");
  c.init.word_embed_stddev = i.at("word_embed_stddev");
  c.init.weight_stddev = i.at("weight_stddev");
  c.init.image_embed_stddev = i.at("image_embed_stddev");
  c.init.cond_mean = i.at("cond_mean");
  c.init.cond_stddev = i.at("cond_stddev");
  c.init.tensor_stddev = i.at("tensor_stddev");
  c.seed = cfg.at("seed");
  c.threads = cfg.at("threads");
  c.validate();
  return c;
}

DecodeConfig decode_from(const json& cfg, const GuidanceMode& mode) {
  DecodeConfig d;
  d.beam_size = cfg.at("decode").at("beam_size");
  d.max_length = cfg.at("decode").at("max_length");
  d.mode = mode;
  d.validate();
  return d;
}

SynthSpec synth_from(const json& cfg) {
  const json& s = cfg.at("synth");
  SynthSpec spec;
  for (const auto& c : s.at("categories")) {
    spec.categories.push_back({c.at("name").get<std::string>(), c.at("words").get<std::vector<std::string>>(),
                               c.value("block_dim", std::size_t{4})});
  }
  spec.num_examples = s.at("num_examples");
  spec.noise_stddev = s.at("noise_stddev");
  spec.shared_fraction = s.at("shared_fraction");
  spec.article = s.at("article");
  spec.seed = cfg.at("seed");
  spec.validate();
  return spec;
}

// ---- files ----------------------------------------------------------------

fs::path input_path(const json& cfg, const std::string& key, const std::string& flag) {
  const json* node = &cfg;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  const std::string value = node->get<std::string>();
  if (value.empty()) throw UsageError(key + " is not set (use " + flag + ")");
  if (!fs::is_regular_file(value)) throw InputError("missing file: " + value);
  return value;
}

fs::path output_dir(const json& cfg) {
  const fs::path dir = cfg.at("output_dir").get<std::string>();
  if (dir.empty()) throw UsageError("output_dir is empty");
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const json& cfg, std::ostream& out) {
  const Dataset ds = synth_dataset(synth_from(cfg));
  const fs::path dir = output_dir(cfg);
  save_dataset(ds, dir / "manifest.json");
  out << "wrote " << (dir / "manifest.json").string() << ": " << ds.examples.size() << " examples, "
      << ds.vocab.size() << " vocabulary entries, feature dim " << ds.features.dim() << '\n';
  return kOk;
}

int cmd_train(const json& cfg, std::ostream& out) {
  const fs::path manifest = input_path(cfg, "data.manifest", "--manifest");
  const TrainConfig tc = train_from(cfg);
  const GuidanceMode mode = mode_from(cfg.at("mode"));
  const Dataset data = load_dataset(manifest);
  if (data.examples.empty()) throw InputError("empty dataset: " + manifest.string());
  const fs::path dir = output_dir(cfg);

  const std::size_t log_every = cfg.at("train").at("log_every");
  const Checkpoint ck = train(data, tc, mode, [&](const LossRecord& r) {
    if (log_every > 0 && r.iteration % log_every == 0) {
      out << "iter " << r.iteration << " stage " << r.stage << " loss " << r.loss << '\n';
    }
  });

  save_checkpoint(ck, dir / "checkpoint.bin");
  std::string csv = "iteration,stage,loss\n";
  for (const auto& r : ck.meta.losses) {
    csv += std::to_string(r.iteration) + "," + std::to_string(r.stage) + "," + format_double(r.loss) + "\n";
  }
  write_text(dir / "loss.csv", csv);
  out << "mean token loss " << mean_token_loss(ck.params, data, ck.mode) << '\n';
  out << "wrote " << (dir / "checkpoint.bin").string() << " and " << (dir / "loss.csv").string() << '\n';
  return kOk;
}

int cmd_generate(const json& cfg, std::ostream& out) {
  const fs::path ck_path = input_path(cfg, "checkpoint", "--checkpoint");
  const fs::path manifest = input_path(cfg, "data.manifest", "--manifest");
  const Checkpoint ck = load_checkpoint(ck_path);
  const Dataset data = load_dataset(manifest);
  if (data.features.dim() != ck.params.dims.raw) {
    throw FormatError(FormatError::Kind::kDimMismatch,
                      "feature dim " + std::to_string(data.features.dim()) + " but checkpoint expects " +
                          std::to_string(ck.params.dims.raw));
  }
  const DecodeConfig dc = decode_from(cfg, ck.mode);
  const fs::path dir = output_dir(cfg);

  std::vector<std::size_t> ids;
  for (const auto& ex : data.examples) ids.push_back(ex.feature_id);
  if (ids.empty()) {
    for (std::size_t i = 0; i < data.features.count(); ++i) ids.push_back(i);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  std::vector<Decoded> results(ids.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.at("threads").get<std::size_t>(), ids.size()));
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < ids.size(); i += workers) {
      results[i] = beam_search(ck.params, data.features.vector(ids[i]), dc).front();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();

  std::string jsonl;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const json line{{"feature_id", ids[i]},
                    {"tokens", decode_caption(ck.vocab, results[i].token_ids)},
                    {"logprob", results[i].logprob}};
    jsonl += line.dump() + "\n";
  }
  write_text(dir / "captions.jsonl", jsonl);
  out << "decoded " << ids.size() << " images with beam " << dc.beam_size << " into "
      << (dir / "captions.jsonl").string() << '\n';
  return kOk;
}

int cmd_eval(const json& cfg, std::ostream& out) {
  const fs::path manifest = input_path(cfg, "data.manifest", "--manifest");
  fs::path predictions = cfg.at("eval").at("predictions").get<std::string>();
  if (predictions.empty()) predictions = fs::path(cfg.at("output_dir").get<std::string>()) / "captions.jsonl";
  if (!fs::is_regular_file(predictions)) throw InputError("missing file: " + predictions.string());
  const Dataset data = load_dataset(manifest);

  std::map<std::size_t, std::vector<Sentence>> refs;
  for (const auto& ex : data.examples) refs[ex.feature_id].push_back(decode_caption(data.vocab, ex.token_ids));

  std::vector<Sentence> candidates;
  std::vector<std::vector<Sentence>> references;
  std::set<std::size_t> seen;
  std::ifstream in(predictions);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::size_t fid = j.at("feature_id");
      if (!seen.insert(fid).second) throw InputError("duplicate feature_id " + std::to_string(fid));
      const auto it = refs.find(fid);
      if (it == refs.end()) throw InputError("no reference captions for feature_id " + std::to_string(fid));
      candidates.push_back(j.at("tokens").get<Sentence>());
      references.push_back(it->second);
    } catch (const json::exception& e) {
      throw FormatError(FormatError::Kind::kMalformed,
                        predictions.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (candidates.empty()) throw InputError("no predictions in " + predictions.string());

  const auto b = bleu(candidates, references);
  const CiderResult c = cider(candidates, references);
  const fs::path dir = output_dir(cfg);
  const json report{{"bleu", b}, {"cider", c.score}, {"per_example", c.per_example}};
  write_text(dir / "metrics.json", report.dump(2) + "\n");
  out << std::fixed << std::setprecision(4);
  for (std::size_t n = 0; n < b.size(); ++n) out << "BLEU@" << n + 1 << " " << b[n] << '\n';
  out << "CIDEr-D " << c.score << '\n';
  out.unsetf(std::ios::floatfield);
  return kOk;
}

int cmd_gradcheck(const json& cfg, std::ostream& out) {
  const json& g = cfg.at("gradcheck");
  const std::string precision_name = g.at("fd_precision");
  FdPrecision precision;
  if (precision_name == "extended") {
    precision = FdPrecision::kExtended;
  } else if (precision_name == "double") {
    precision = FdPrecision::kDouble;
  } else {
    throw std::invalid_argument("config: gradcheck.fd_precision must be 'extended' or 'double'");
  }
  const double eps = g.at("epsilon");
  const double tol = g.at("tolerance");
  const double lambda = g.at("lambda");
  const std::size_t per_tensor = g.at("max_per_tensor");
  const std::uint64_t seed = cfg.at("seed");

  std::vector<GuidanceMode> modes;
  for (const auto& t : g.at("transfers")) {
    for (const auto& m : g.at("modes")) modes.push_back(mode_from_spec(m, parse_transfer(t.get<std::string>())));
  }

  json report = json::array();
  bool all_pass = true;
  double worst = 0.0;
  for (const auto& mode : modes) {
    const TinyProblem p = tiny_problem(mode, seed);
    const GradCheckReport r =
        gradient_check(p.params, p.raw, p.caption, mode, eps, tol, lambda, per_tensor, seed, precision);
    all_pass = all_pass && r.pass;
    worst = std::max(worst, r.max_rel_error);
    out << std::left << std::setw(26) << mode.name() << " max rel " << std::scientific << std::setprecision(2)
        << r.max_rel_error << (r.pass ? "  ok" : "  FAIL") << '\n';
    out.unsetf(std::ios::floatfield);
    for (const auto& name : r.failing()) out << "    failing tensor " << name << '\n';
    json groups = json::array();
    for (const auto& gc : r.groups) {
      groups.push_back({{"tensor", gc.name}, {"checked", gc.checked}, {"max_rel_error", gc.max_rel_error},
                        {"pass", gc.pass}});
    }
    report.push_back({{"mode", mode.name()}, {"max_rel_error", r.max_rel_error}, {"pass", r.pass},
                      {"tensors", groups}});
  }
  const fs::path dir = output_dir(cfg);
  write_text(dir / "gradcheck.json",
             json{{"pass", all_pass}, {"max_rel_error", worst}, {"modes", report}}.dump(2) + "\n");
  out << "max relative error " << std::scientific << std::setprecision(3) << worst << " over " << modes.size()
      << " modes: " << (all_pass ? "pass" : "FAIL") << '\n';
  out.unsetf(std::ios::floatfield);
  return all_pass ? kOk : kVerification;
}

int cmd_analyze(const json& cfg, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(input_path(cfg, "checkpoint", "--checkpoint"));
  const std::size_t k = cfg.at("analyze").at("k");
  const std::string word = cfg.at("analyze").at("word");

  std::vector<std::string> targets;
  if (word.empty()) {
    targets = ck.vocab.words();
  } else {
    if (!ck.vocab.contains(word)) throw std::invalid_argument("analyze: '" + word + "' is not in the vocabulary");
    targets.push_back(word);
  }

  json neighbors = json::object();
  for (const auto& w : targets) {
    const auto nn = mask_nearest_neighbors(ck.params.cond, ck.vocab.lookup(w), k, &ck.vocab);
    out << w << ":";
    json list = json::array();
    for (const auto& n : nn) {
      char dist[32];
      std::snprintf(dist, sizeof dist, "%.4f", n.distance);
      out << "  " << n.word << " (" << dist << ")";
      list.push_back({{"word", n.word}, {"distance", n.distance}});
    }
    out << '\n';
    neighbors[w] = list;
  }

  json report{{"k", k}, {"neighbors", neighbors}};
  std::vector<std::vector<std::string>> categories;
  for (const auto& c : cfg.at("synth").at("categories")) {
    std::vector<std::string> present;
    for (const auto& w : c.at("words")) {
      if (ck.vocab.contains(w.get<std::string>())) present.push_back(w);
    }
    if (present.size() >= 2) categories.push_back(present);
  }
  if (!categories.empty()) {
    const CategoryClustering cc = category_clustering(ck.params.cond, ck.vocab, categories);
    out << "category clustering " << cc.clustered << "/" << cc.words << '\n';
    report["clustering"] = {{"words", cc.words}, {"clustered", cc.clustered}, {"fraction", cc.fraction()}};
  }
  const fs::path dir = output_dir(cfg);
  write_text(dir / "analysis.json", report.dump(2) + "\n");
  return kOk;
}

struct Shortcut {
  const char* flag;
  const char* path;
  const char* help;
};

const std::map<std::string, std::vector<Shortcut>>& shortcuts() {
  static const Shortcut common[] = {
      {"--seed", "seed", "random seed"},
      {"--threads", "threads", "worker threads"},
      {"--output-dir", "output_dir", "directory for every file the command writes"},
  };
  static const std::map<std::string, std::vector<Shortcut>> table = [] {
    std::map<std::string, std::vector<Shortcut>> t{
        {"synth", {}},
        {"train", {{"--manifest", "data.manifest", "dataset manifest"}}},
        {"generate",
         {{"--manifest", "data.manifest", "dataset manifest"},
          {"--checkpoint", "checkpoint", "trained checkpoint"},
          {"--beam", "decode.beam_size", "beam size (1 = greedy)"}}},
        {"eval",
         {{"--manifest", "data.manifest", "dataset manifest with references"},
          {"--predictions", "eval.predictions", "captions.jsonl from generate"}}},
        {"gradcheck", {{"--fd-precision", "gradcheck.fd_precision", "extended or double"}}},
        {"analyze",
         {{"--checkpoint", "checkpoint", "trained checkpoint"},
          {"--word", "analyze.word", "word to list neighbors for (default: all)"},
          {"--k", "analyze.k", "neighbors per word"}}},
    };
    for (auto& [name, list] : t) list.insert(list.begin(), std::begin(common), std::end(common));
    return t;
  }();
  return table;
}

std::vector<std::pair<std::string, std::string>> parse_extras(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) throw UsageError("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw UsageError("missing value for '" + a + "'");
      out.emplace_back(a.substr(2), extras[++i]);
    }
  }
  return out;
}

}  // namespace

json default_config() {
  const TrainConfig t;
  const DecodeConfig d;
  const SynthSpec s = SynthSpec::standard();
  return {
      {"seed", t.seed},
      {"threads", t.threads},
      {"output_dir", "out"},
      {"data", {{"manifest", ""}}},
      {"checkpoint", ""},
      {"mode", {{"variant", "sentence"}, {"n", std::size_t{1}}, {"transfer", "tanh"}}},
      {"train",
       {{"lambda", t.lambda},
        {"lr_lm", t.lr_lm},
        {"lr_img", t.lr_img},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"batch_size", t.batch_size},
        {"stage_iters", t.stage_iters},
        {"grad_clip", nullptr},
        {"cond_init", "gaussian"},
        {"log_every", std::size_t{100}},
        {"shape", {{"embed", t.shape.embed}, {"hidden", t.shape.hidden}, {"image_embed", t.shape.image_embed}}},
        {"init",
         {{"word_embed_stddev", t.init.word_embed_stddev},
          {"weight_stddev", t.init.weight_stddev},
          {"image_embed_stddev", t.init.image_embed_stddev},
          {"cond_mean", t.init.cond_mean},
          {"cond_stddev", t.init.cond_stddev},
          {"tensor_stddev", t.init.tensor_stddev}}}}},
      {"decode", {{"beam_size", d.beam_size}, {"max_length", d.max_length}}},
      {"synth",
       {{"num_examples", s.num_examples},
        {"noise_stddev", s.noise_stddev},
        {"shared_fraction", s.shared_fraction},
        {"article", s.article},
        {"categories", categories_json(s.categories)}}},
      {"eval", {{"predictions", ""}}},
      {"gradcheck",
       {{"modes", {"time_invariant", "ngram:1", "ngram:3", "sentence", "full_tensor"}},
        {"transfers", {"identity", "sigmoid", "tanh", "relu", "softmax"}},
        {"epsilon", 1e-5},
        {"tolerance", 1e-4},
        {"lambda", 1e-3},
        {"max_per_tensor", std::size_t{0}},
        {"fd_precision", "extended"}}},
      {"analyze", {{"word", ""}, {"k", std::size_t{6}}}},
  };
}

json resolve_config(const std::string& config_path,
                    const std::vector<std::pair<std::string, std::string>>& overrides) {
  const json defaults = default_config();
  json cfg = defaults;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw InputError("missing config file: " + config_path);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(FormatError::Kind::kMalformed, config_path + ": " + e.what());
    }
    merge_checked(cfg, file, defaults, "");
  }
  for (const auto& [path, text] : overrides) {
    merge_checked(cfg, override_patch(defaults, path, text), defaults, "");
  }
  return cfg;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-conditional image captioning: synthetic data, training, decoding, evaluation", "textcond"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::map<std::string, std::string> shortcut_values;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> descriptions{
      {"synth", "write a compositional synthetic corpus (manifest + features)"},
      {"train", "run the three-stage schedule; writes checkpoint.bin and loss.csv"},
      {"generate", "decode every image of a dataset; writes captions.jsonl"},
      {"eval", "BLEU@1-4 and CIDEr-D of captions.jsonl against the manifest; writes metrics.json"},
      {"gradcheck", "finite-difference check of the analytic gradients on the tiny model"},
      {"analyze", "nearest neighbors between W_c columns; writes analysis.json"},
  };
  for (const auto& [name, list] : shortcuts()) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    sub->allow_extras();
    sub->add_option("--config", config_path, "JSON config file");
    for (const auto& s : list) sub->add_option(s.flag, shortcut_values[std::string(name) + s.flag], s.help);
    sub->footer("Any config value can be overridden with --<dotted.key> <value>, e.g. --train.lambda 0.01");
    subs[name] = sub;
  }

  std::vector<const char*> argv{"textcond"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  CLI::App* sub = subs.at(name);
  try {
    auto overrides = parse_extras(sub->remaining());
    for (const auto& s : shortcuts().at(name)) {
      if (sub->count(s.flag) > 0) overrides.emplace_back(s.path, shortcut_values.at(name + s.flag));
    }
    const json cfg = resolve_config(config_path, overrides);
    out << "resolved config:\n" << cfg.dump(2) << '\n';

    if (name == "synth") return cmd_synth(cfg, out);
    if (name == "train") return cmd_train(cfg, out);
    if (name == "generate") return cmd_generate(cfg, out);
    if (name == "eval") return cmd_eval(cfg, out);
    if (name == "gradcheck") return cmd_gradcheck(cfg, out);
    return cmd_analyze(cfg, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const json::exception& e) {
    err << "error: config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  }
}

}  // namespace textcond::cli
