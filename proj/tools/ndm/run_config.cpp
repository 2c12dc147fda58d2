#include "run_config.hpp"

#include "ndm/checkpoint.hpp"
#include "ndm/errors.hpp"

#include <toml.hpp>

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ndm::cli {

namespace {

// Reads typed fields from one table and remembers which keys were used.
class Section {
 public:
  Section(const toml::table& root, std::string name) : name_(std::move(name)) {
    const toml::node* n = root.get(name_);
    if (n && !n->is_table()) throw ConfigError("[" + name_ + "] must be a table");
    table_ = n ? n->as_table() : nullptr;
  }

  bool has(const char* key) const { return table_ && table_->contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    if (!table_) return;
    const toml::node* n = table_->get(key);
    if (!n) return;
    used_.insert(key);
    read(*n, key, out);
  }

  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_)
      if (!used_.count(std::string(k.str()))) throw ConfigError("unknown key " + name_ + "." + std::string(k.str()));
  }

 private:
  [[noreturn]] void bad(const char* key, const char* what) const {
    throw ConfigError(name_ + "." + key + " must be " + what);
  }

  void read(const toml::node& n, const char* key, std::string& out) const {
    if (!n.is_string()) bad(key, "a string");
    out = n.as_string()->get();
  }
  void read(const toml::node& n, const char* key, bool& out) const {
    if (!n.is_boolean()) bad(key, "a boolean");
    out = n.as_boolean()->get();
  }
  void read(const toml::node& n, const char* key, double& out) const {
    if (n.is_floating_point()) out = n.as_floating_point()->get();
    else if (n.is_integer()) out = static_cast<double>(n.as_integer()->get());
    else bad(key, "a number");
  }
  void read(const toml::node& n, const char* key, std::int64_t& out) const {
    if (!n.is_integer()) bad(key, "an integer");
    out = n.as_integer()->get();
  }
  void read(const toml::node& n, const char* key, int& out) const {
    std::int64_t v = 0;
    read(n, key, v);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad(key, "a 32-bit integer");
    out = static_cast<int>(v);
  }
  void read(const toml::node& n, const char* key, std::uint64_t& out) const {
    std::int64_t v = 0;
    read(n, key, v);
    if (v < 0) bad(key, "non-negative");
    out = static_cast<std::uint64_t>(v);
  }
  template <class T>
  void read(const toml::node& n, const char* key, std::vector<T>& out) const {
    if (!n.is_array()) bad(key, "an array");
    out.clear();
    for (const toml::node& e : *n.as_array()) {
      T v{};
      read(e, key, v);
      out.push_back(v);
    }
  }

  std::string name_;
  const toml::table* table_ = nullptr;
  std::set<std::string> used_;
};

void merge(toml::table& base, const toml::table& over) {
  for (auto&& [k, v] : over) {
    toml::node* existing = base.get(k);
    if (existing && existing->is_table() && v.is_table()) {
      merge(*existing->as_table(), *v.as_table());
    } else {
      base.insert_or_assign(k, v);
    }
  }
}

toml::table parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like section.key=value: " + text);
  const std::string key = text.substr(0, eq);
  const std::string value = text.substr(eq + 1);
  try {
    return toml::parse(key + " = " + value);
  } catch (const toml::parse_error&) {
  }
  // bare words are taken as strings
  std::vector<std::string> path;
  std::istringstream parts(key);
  for (std::string seg; std::getline(parts, seg, '.');) {
    const auto b = seg.find_first_not_of(' '), e = seg.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError("bad override key in " + text);
    path.push_back(seg.substr(b, e - b + 1));
  }
  if (path.empty()) throw ConfigError("bad override key in " + text);
  toml::table t;
  toml::table* cur = &t;
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    cur = cur->insert_or_assign(path[i], toml::table{}).first->second.as_table();
  cur->insert_or_assign(path.back(), value);
  return t;
}

LossMode parse_loss(const std::string& s) {
  if (s == "discrete") return LossMode::Discrete;
  if (s == "continuous") return LossMode::Continuous;
  if (s == "simple") return LossMode::Simple;
  throw ConfigError("train.loss must be discrete, continuous or simple (got " + s + ")");
}

TransformKind parse_transform(const std::string& s) {
  if (s == "identity") return TransformKind::Identity;
  if (s == "fixed-diagonal") return TransformKind::FixedDiagonal;
  if (s == "learnable") return TransformKind::Learnable;
  throw ConfigError("transform.kind must be identity, fixed-diagonal or learnable (got " + s + ")");
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(c.data.size > 1, "data.size must be > 1");
  require(c.data.train_fraction > 0 && c.data.train_fraction < 1, "data.train_fraction must lie in (0, 1)");
  require(c.schedule.steps >= 2, "schedule.steps must be >= 2");
  require(c.schedule.beta_min > 0 && c.schedule.beta_max > c.schedule.beta_min, "need 0 < beta_min < beta_max");
  require(c.schedule.t_min > 0 && c.schedule.t_min < 1, "schedule.t_min must lie in (0, 1)");
  require(c.batch_size > 0, "train.batch_size must be > 0");
  require(c.iterations >= 0, "train.iterations must be >= 0");
  require(c.lr > 0, "train.lr must be > 0");
  require(c.warmup >= 0 && c.checkpoint_every >= 0, "train.warmup and train.checkpoint_every must be >= 0");
  require(c.eps_net.frequencies > 0 && c.transform_net.frequencies > 0, "frequencies must be > 0");
  for (int w : c.eps_net.hidden) require(w > 0, "eps_net.hidden widths must be > 0");
  for (int w : c.transform_net.hidden) require(w > 0, "transform.hidden widths must be > 0");
  if (c.transform == TransformKind::FixedDiagonal) {
    require(static_cast<int>(c.transform_coefficients.size()) == dataset_dim(c.data.kind),
            "transform.coefficients needs one entry per data dimension");
    for (double v : c.transform_coefficients) require(v > 0, "transform.coefficients must be positive");
  }
  const std::set<std::string> methods{"ancestral", "ddim", "em-sde", "rk45-ode"};
  require(methods.count(c.sampler.method) > 0, "sampler.method must be ancestral, ddim, em-sde or rk45-ode");
  require(c.sampler.steps >= 0 && c.sampler.atol > 0 && c.sampler.rtol > 0, "invalid sampler settings");
  require(c.dot.hidden >= 0 && c.dot.iterations > 0 && c.dot.batch_size > 0 && c.dot.lr > 0 && c.dot.warmup >= 0 &&
              c.dot.samples >= 0,
          "invalid [dot] settings");
}

toml::array to_array(const std::vector<int>& v) {
  toml::array a;
  for (int x : v) a.push_back(x);
  return a;
}

toml::array to_array(const std::vector<double>& v) {
  toml::array a;
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Discrete:
      return "discrete";
    case LossMode::Continuous:
      return "continuous";
    case LossMode::Simple:
      return "simple";
  }
  return "continuous";
}

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::Identity:
      return "identity";
    case TransformKind::FixedDiagonal:
      return "fixed-diagonal";
    case TransformKind::Learnable:
      return "learnable";
  }
  return "identity";
}

RunConfig parse_run_config(const std::string& toml_text, const std::vector<std::string>& overrides) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }
  for (const std::string& o : overrides) merge(root, parse_override(o));

  const std::set<std::string> sections{"run", "data", "schedule", "transform", "eps_net", "train", "sampler", "dot"};
  for (auto&& [k, v] : root)
    if (!sections.count(std::string(k.str()))) throw ConfigError("unknown section [" + std::string(k.str()) + "]");

  RunConfig c;
  Section run(root, "run");
  if (!run.has("seed")) throw ConfigError("run.seed is required");
  run.get("seed", c.seed);
  run.get("run_id", c.run_id);
  run.get("output_dir", c.output_dir);
  run.finish();

  Section data(root, "data");
  std::string kind = to_string(c.data.kind);
  data.get("kind", kind);
  try {
    c.data.kind = parse_dataset_kind(kind);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("data.kind: ") + e.what());
  }
  data.get("size", c.data.size);
  data.get("seed", c.data.seed);
  data.get("train_fraction", c.data.train_fraction);
  data.get("split_seed", c.data.split_seed);
  data.finish();

  Section schedule(root, "schedule");
  schedule.get("steps", c.schedule.steps);
  schedule.get("beta_min", c.schedule.beta_min);
  schedule.get("beta_max", c.schedule.beta_max);
  schedule.get("t_min", c.schedule.t_min);
  schedule.finish();

  Section transform(root, "transform");
  std::string tkind = to_string(c.transform);
  transform.get("kind", tkind);
  c.transform = parse_transform(tkind);
  transform.get("hidden", c.transform_net.hidden);
  transform.get("frequencies", c.transform_net.frequencies);
  transform.get("coefficients", c.transform_coefficients);
  transform.finish();

  Section eps(root, "eps_net");
  eps.get("hidden", c.eps_net.hidden);
  eps.get("frequencies", c.eps_net.frequencies);
  eps.finish();

  Section train(root, "train");
  std::string loss = to_string(c.loss);
  train.get("loss", loss);
  c.loss = parse_loss(loss);
  train.get("batch_size", c.batch_size);
  train.get("iterations", c.iterations);
  train.get("lr", c.lr);
  train.get("warmup", c.warmup);
  train.get("checkpoint_every", c.checkpoint_every);
  train.finish();
  c.schedule.mode = c.loss == LossMode::Discrete ? TimeMode::Discrete : TimeMode::Continuous;

  Section sampler(root, "sampler");
  sampler.get("method", c.sampler.method);
  sampler.get("steps", c.sampler.steps);
  sampler.get("atol", c.sampler.atol);
  sampler.get("rtol", c.sampler.rtol);
  sampler.finish();

  Section dot(root, "dot");
  dot.get("hidden", c.dot.hidden);
  dot.get("learnable_transform", c.dot.learnable_transform);
  dot.get("iterations", c.dot.iterations);
  dot.get("batch_size", c.dot.batch_size);
  dot.get("lr", c.dot.lr);
  dot.get("warmup", c.dot.warmup);
  dot.get("samples", c.dot.samples);
  dot.finish();

  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), overrides);
}

std::string canonical_toml(const RunConfig& c) {
  toml::table t{
      {"run", toml::table{{"run_id", c.run_id},
                          {"seed", static_cast<std::int64_t>(c.seed)},
                          {"output_dir", c.output_dir}}},
      {"data", toml::table{{"kind", to_string(c.data.kind)},
                           {"size", c.data.size},
                           {"seed", static_cast<std::int64_t>(c.data.seed)},
                           {"train_fraction", c.data.train_fraction},
                           {"split_seed", static_cast<std::int64_t>(c.data.split_seed)}}},
      {"schedule", toml::table{{"steps", c.schedule.steps},
                               {"beta_min", c.schedule.beta_min},
                               {"beta_max", c.schedule.beta_max},
                               {"t_min", c.schedule.t_min}}},
      {"transform", toml::table{{"kind", to_string(c.transform)},
                                {"hidden", to_array(c.transform_net.hidden)},
                                {"frequencies", c.transform_net.frequencies},
                                {"coefficients", to_array(c.transform_coefficients)}}},
      {"eps_net", toml::table{{"hidden", to_array(c.eps_net.hidden)}, {"frequencies", c.eps_net.frequencies}}},
      {"train", toml::table{{"loss", to_string(c.loss)},
                            {"batch_size", c.batch_size},
                            {"iterations", c.iterations},
                            {"lr", c.lr},
                            {"warmup", c.warmup},
                            {"checkpoint_every", c.checkpoint_every}}},
      {"sampler", toml::table{{"method", c.sampler.method},
                              {"steps", c.sampler.steps},
                              {"atol", c.sampler.atol},
                              {"rtol", c.sampler.rtol}}},
      {"dot", toml::table{{"hidden", c.dot.hidden},
                          {"learnable_transform", c.dot.learnable_transform},
                          {"iterations", c.dot.iterations},
                          {"batch_size", c.dot.batch_size},
                          {"lr", c.dot.lr},
                          {"warmup", c.dot.warmup},
                          {"samples", c.dot.samples}}},
  };
  std::ostringstream out;
  out << t << "\n";
  return out.str();
}

// The output directory does not change results, so it is left out.
std::string config_hash(const RunConfig& config) {
  RunConfig c = config;
  c.output_dir.clear();
  return fnv1a_hex(canonical_toml(c));
}

std::string dataset_descriptor(const DataConfig& d) {
  std::ostringstream out;
  out.precision(17);
  out << to_string(d.kind) << ";size=" << d.size << ";seed=" << d.seed << ";train_fraction=" << d.train_fraction
      << ";split_seed=" << d.split_seed;
  return out.str();
}

DataConfig parse_dataset_descriptor(const std::string& text) {
  DataConfig d;
  std::istringstream in(text);
  std::string part;
  if (!std::getline(in, part, ';')) throw ConfigError("empty dataset descriptor");
  try {
    d.kind = parse_dataset_kind(part);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("dataset descriptor: ") + e.what());
  }
  while (std::getline(in, part, ';')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("bad dataset descriptor field " + part);
    const std::string k = part.substr(0, eq), v = part.substr(eq + 1);
    try {
      if (k == "size") d.size = std::stoll(v);
      else if (k == "seed") d.seed = std::stoull(v);
      else if (k == "train_fraction") d.train_fraction = std::stod(v);
      else if (k == "split_seed") d.split_seed = std::stoull(v);
      else throw ConfigError("unknown dataset descriptor field " + k);
    } catch (const std::logic_error&) {
      throw ConfigError("bad dataset descriptor value " + part);
    }
  }
  return d;
}

}  // namespace ndm::cli
