#pragma once

#include <string>

#include "bcot/coupling.hpp"
#include "bcot/types.hpp"
#include "json.hpp"

namespace bcot {

// Hex SHA-1 of the git blob object for `content` ("blob <len>\0" + content).
std::string git_blob_sha1(const std::string& content);

// Long format, one row per (trajectory, step, asset):
//   traj_id,n,asset,y,y_prime
// Values are printed with 17 significant digits, so reading back is exact.
std::string trajectories_to_csv(const Batch& batch);
Batch trajectories_from_csv(const std::string& text);

// Writes `path` and the sidecar `path + ".json"` holding the config echo, seed,
// shape and content hash.
void write_trajectory_dump(const std::string& path, const Batch& batch, const nlohmann::json& config_echo,
                           std::uint64_t seed);
// Reads a dump and checks it against its sidecar when one exists; throws
// std::runtime_error on a hash mismatch.
Batch read_trajectory_dump(const std::string& path);

nlohmann::json checkpoint_json(const CouplingParams& params, int round);
// Validates the header against the parameter count of its layout.
CouplingParams params_from_checkpoint(const nlohmann::json& j, int* round = nullptr);

void save_checkpoint(const std::string& path, const CouplingParams& params, int round);
CouplingParams load_checkpoint(const std::string& path, int* round = nullptr);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace bcot
