#include "ndm/checkpoint.hpp"

#include "ndm/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ndm {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json spec_to_json(const NetSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_widths", s.hidden_widths},
          {"output_dim", s.output_dim},
          {"activation", "silu"},
          {"time_embedding", s.time_embedding == TimeEmbedding::Sinusoidal ? "sinusoidal" : "raw"},
          {"frequencies", s.frequencies}};
}

NetSpec spec_from_json(const json& j) {
  NetSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  s.output_dim = j.at("output_dim").get<int>();
  if (j.at("activation").get<std::string>() != "silu") throw ContractError("checkpoint: unknown activation");
  const std::string emb = j.at("time_embedding").get<std::string>();
  if (emb == "sinusoidal")
    s.time_embedding = TimeEmbedding::Sinusoidal;
  else if (emb == "raw")
    s.time_embedding = TimeEmbedding::RawScalar;
  else
    throw ContractError("checkpoint: unknown time embedding '" + emb + "'");
  s.frequencies = j.at("frequencies").get<int>();
  s.validate();
  return s;
}

json params_to_json(const NetParams& p) { return {{"values", p.values}, {"version", p.version}}; }

NetParams params_from_json(const json& j, const NetSpec& spec) {
  NetParams p{j.at("values").get<std::vector<double>>(), j.at("version").get<std::uint64_t>()};
  if (p.values.size() != spec.parameter_count()) throw ContractError("checkpoint: parameter count mismatch");
  return p;
}

json schedule_to_json(const ScheduleConfig& c) {
  return {{"mode", c.mode == TimeMode::Continuous ? "continuous" : "discrete"},
          {"steps", c.steps},
          {"beta_min", c.beta_min},
          {"beta_max", c.beta_max},
          {"t_min", c.t_min},
          {"ddpm_beta_start", c.ddpm_beta_start},
          {"ddpm_beta_end", c.ddpm_beta_end}};
}

ScheduleConfig schedule_from_json(const json& j) {
  ScheduleConfig c;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "continuous")
    c.mode = TimeMode::Continuous;
  else if (mode == "discrete")
    c.mode = TimeMode::Discrete;
  else
    throw ContractError("checkpoint: unknown schedule mode '" + mode + "'");
  c.steps = j.at("steps").get<int>();
  c.beta_min = j.at("beta_min").get<double>();
  c.beta_max = j.at("beta_max").get<double>();
  c.t_min = j.at("t_min").get<double>();
  c.ddpm_beta_start = j.at("ddpm_beta_start").get<double>();
  c.ddpm_beta_end = j.at("ddpm_beta_end").get<double>();
  return c;
}

json transform_to_json(const Transform& t) {
  json j{{"data_dim", t.data_dim()}};
  switch (t.kind()) {
    case TransformKind::Identity:
      j["kind"] = "identity";
      break;
    case TransformKind::FixedDiagonal:
      j["kind"] = "fixed-diagonal";
      j["diagonal"] = std::vector<double>(t.diagonal().data(), t.diagonal().data() + t.diagonal().size());
      break;
    case TransformKind::Learnable:
      j["kind"] = "learnable";
      j["net"] = spec_to_json(t.net_spec());
      j["params"] = params_to_json(t.params());
      break;
  }
  return j;
}

Transform transform_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return Transform::identity(j.at("data_dim").get<int>());
  if (kind == "fixed-diagonal") {
    const auto d = j.at("diagonal").get<std::vector<double>>();
    return Transform::fixed_diagonal(Eigen::Map<const Vec>(d.data(), static_cast<Eigen::Index>(d.size())));
  }
  if (kind == "learnable") {
    NetSpec spec = spec_from_json(j.at("net"));
    NetParams params = params_from_json(j.at("params"), spec);
    return Transform::learnable(std::move(spec), std::move(params));
  }
  throw ContractError("checkpoint: unknown transform kind '" + kind + "'");
}

std::vector<double> row_to_vector(const Eigen::RowVectorXd& r) { return {r.data(), r.data() + r.size()}; }

Eigen::RowVectorXd vector_to_row(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

NdmModel Checkpoint::ndm_model() const {
  if (kind != Kind::Ndm) throw ContractError("checkpoint: not an eps-network model");
  return NdmModel{Schedule(schedule), transform, eps_spec, eps_params};
}

DotModel Checkpoint::dot_model() const {
  if (kind != Kind::Dot) throw ContractError("checkpoint: not a restricted 1-D model");
  return DotModel{Schedule(schedule), transform, dot_map};
}

Checkpoint Checkpoint::from_model(const NdmModel& model) {
  Checkpoint c;
  c.kind = Kind::Ndm;
  c.schedule = model.schedule.config();
  c.transform = model.transform;
  c.eps_spec = model.eps_spec;
  c.eps_params = model.eps_params;
  c.normalization = Normalization::identity(model.data_dim());
  return c;
}

std::string checkpoint_to_json(const Checkpoint& c) {
  json j{{"format", "ndm-checkpoint"},
         {"format_version", kFormatVersion},
         {"kind", c.kind == Checkpoint::Kind::Ndm ? "ndm" : "dot"},
         {"schedule", schedule_to_json(c.schedule)},
         {"transform", transform_to_json(c.transform)},
         {"normalization", {{"mean", row_to_vector(c.normalization.mean)}, {"scale", row_to_vector(c.normalization.scale)}}},
         {"dataset", c.dataset},
         {"loss_mode", c.loss_mode},
         {"config_hash", c.config_hash},
         {"step", c.step},
         {"seed", c.seed}};
  if (c.kind == Checkpoint::Kind::Ndm) {
    j["eps_net"] = {{"spec", spec_to_json(c.eps_spec)}, {"params", params_to_json(c.eps_params)}};
  } else {
    j["dot_map"] = {{"hidden", c.dot_map.hidden()}, {"params", c.dot_map.params()}};
  }
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "ndm-checkpoint") throw ContractError("checkpoint: wrong format tag");
    if (j.at("format_version").get<int>() != kFormatVersion) throw ContractError("checkpoint: unsupported version");
    Checkpoint c;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "ndm")
      c.kind = Checkpoint::Kind::Ndm;
    else if (kind == "dot")
      c.kind = Checkpoint::Kind::Dot;
    else
      throw ContractError("checkpoint: unknown kind '" + kind + "'");
    c.schedule = schedule_from_json(j.at("schedule"));
    c.transform = transform_from_json(j.at("transform"));
    c.normalization.mean = vector_to_row(j.at("normalization").at("mean").get<std::vector<double>>());
    c.normalization.scale = vector_to_row(j.at("normalization").at("scale").get<std::vector<double>>());
    if (c.normalization.mean.size() != c.transform.data_dim() ||
        c.normalization.scale.size() != c.transform.data_dim())
      throw ContractError("checkpoint: normalization dimension mismatch");
    c.dataset = j.at("dataset").get<std::string>();
    c.loss_mode = j.at("loss_mode").get<std::string>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.step = j.at("step").get<std::int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (c.kind == Checkpoint::Kind::Ndm) {
      c.eps_spec = spec_from_json(j.at("eps_net").at("spec"));
      c.eps_params = params_from_json(j.at("eps_net").at("params"), c.eps_spec);
      if (c.eps_spec.data_dim() != c.transform.data_dim() || c.eps_spec.output_dim != c.transform.data_dim())
        throw ContractError("checkpoint: eps network does not match the data dimension");
    } else {
      c.dot_map = MonotoneMap(j.at("dot_map").at("hidden").get<int>(),
                              j.at("dot_map").at("params").get<std::vector<double>>());
    }
    return c;
  } catch (const json::exception& e) {
    throw ContractError(std::string("checkpoint: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ndm
