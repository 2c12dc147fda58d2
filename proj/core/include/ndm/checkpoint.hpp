#pragma once

#include "ndm/data.hpp"
#include "ndm/dot.hpp"
#include "ndm/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace ndm {

/// Serializable state of a run: either an eps-network model or a restricted
/// 1-D model, plus the data normalization it was trained under.
struct Checkpoint {
  enum class Kind { Ndm, Dot };

  Kind kind = Kind::Ndm;
  ScheduleConfig schedule;
  Transform transform = Transform::identity(1);
  NetSpec eps_spec;
  NetParams eps_params;
  MonotoneMap dot_map;
  Normalization normalization;
  std::string dataset;
  std::string loss_mode;
  std::string config_hash;
  std::int64_t step = 0;
  std::uint64_t seed = 0;

  NdmModel ndm_model() const;
  DotModel dot_model() const;
  static Checkpoint from_model(const NdmModel& model);
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws ContractError on malformed or inconsistent content.
Checkpoint checkpoint_from_json(const std::string& text);

/// Writes to a temporary file in the same directory and renames it into
/// place, so a reader never sees a partial checkpoint.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `content` to `path` atomically (temporary file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// 64-bit FNV-1a of `text` as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace ndm
