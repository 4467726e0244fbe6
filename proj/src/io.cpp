#include "bcot/io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace bcot {

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[k]);
  return os.str();
}

std::string trajectories_to_csv(const Batch& batch) {
  std::string out = "traj_id,n,asset,y,y_prime\n";
  char buf[128];
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = batch[b];
    for (int n = 0; n < t.y.rows(); ++n) {
      for (int i = 0; i < t.dim(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%.17g,%.17g\n", b, n, i, t.y(n, i), t.y_prime(n, i));
        out += buf;
      }
    }
  }
  return out;
}

Batch trajectories_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("traj_id,n,asset,y,y_prime", 0) != 0) {
    throw std::runtime_error("trajectory CSV: missing header");
  }
  struct Row {
    long b;
    int n, i;
    double y, yp;
  };
  std::vector<Row> rows;
  long max_b = -1;
  int max_n = -1, max_i = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r{};
    if (std::sscanf(line.c_str(), "%ld,%d,%d,%lf,%lf", &r.b, &r.n, &r.i, &r.y, &r.yp) != 5 || r.b < 0 || r.n < 0 ||
        r.i < 0) {
      throw std::runtime_error("trajectory CSV: malformed row '" + line + "'");
    }
    max_b = std::max(max_b, r.b);
    max_n = std::max(max_n, r.n);
    max_i = std::max(max_i, r.i);
    rows.push_back(r);
  }
  if (rows.empty()) return {};
  if (static_cast<long>(rows.size()) != (max_b + 1) * (max_n + 1) * (max_i + 1)) {
    throw std::runtime_error("trajectory CSV: rows do not form a complete (traj, n, asset) grid");
  }
  Batch batch(max_b + 1, TrajectoryPair{Mat::Constant(max_n + 1, max_i + 1, std::nan("")),
                                        Mat::Constant(max_n + 1, max_i + 1, std::nan(""))});
  for (const auto& r : rows) {
    batch[r.b].y(r.n, r.i) = r.y;
    batch[r.b].y_prime(r.n, r.i) = r.yp;
  }
  for (const auto& t : batch) validate_trajectory(t, max_i + 1, max_n);
  return batch;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << content;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void write_trajectory_dump(const std::string& path, const Batch& batch, const nlohmann::json& config_echo,
                           std::uint64_t seed) {
  const std::string csv = trajectories_to_csv(batch);
  write_text_file(path, csv);
  nlohmann::json side;
  side["config"] = config_echo;
  side["seed"] = seed;
  side["count"] = batch.size();
  side["horizon"] = batch.empty() ? 0 : batch.front().horizon();
  side["dim"] = batch.empty() ? 0 : batch.front().dim();
  side["sha1"] = git_blob_sha1(csv);
  write_text_file(path + ".json", side.dump(2) + "\n");
}

Batch read_trajectory_dump(const std::string& path) {
  const std::string csv = read_text_file(path);
  if (std::filesystem::exists(path + ".json")) {
    const auto side = nlohmann::json::parse(read_text_file(path + ".json"));
    if (side.contains("sha1") && side["sha1"].get<std::string>() != git_blob_sha1(csv)) {
      throw std::runtime_error("trajectory dump '" + path + "' does not match its recorded hash");
    }
  }
  return trajectories_from_csv(csv);
}

nlohmann::json checkpoint_json(const CouplingParams& params, int round) {
  nlohmann::json j;
  j["d"] = params.dim();
  j["N"] = params.horizon();
  j["rho_max"] = params.rho_max();
  j["pinned_start"] = params.pinned_start();
  j["layout_version"] = kLayoutVersion;
  j["count"] = params.size();
  j["round"] = round;
  const Vec& t = params.flatten();
  j["theta"] = std::vector<double>(t.data(), t.data() + t.size());
  return j;
}

CouplingParams params_from_checkpoint(const nlohmann::json& j, int* round) {
  if (j.at("layout_version").get<int>() != kLayoutVersion) {
    throw std::runtime_error("checkpoint: unsupported layout version");
  }
  const int d = j.at("d").get<int>(), N = j.at("N").get<int>();
  CouplingParams p(d, N, j.at("rho_max").get<double>(), j.at("pinned_start").get<bool>());
  const auto theta = j.at("theta").get<std::vector<double>>();
  if (j.at("count").get<long>() != p.size() || static_cast<long>(theta.size()) != p.size()) {
    throw ShapeError("checkpoint: parameter count does not match the layout for d=" + std::to_string(d) +
                     ", N=" + std::to_string(N));
  }
  p.unflatten(Eigen::Map<const Vec>(theta.data(), static_cast<Eigen::Index>(theta.size())));
  if (round != nullptr) *round = j.value("round", 0);
  return p;
}

void save_checkpoint(const std::string& path, const CouplingParams& params, int round) {
  write_text_file(path, checkpoint_json(params, round).dump() + "\n");
}

CouplingParams load_checkpoint(const std::string& path, int* round) {
  return params_from_checkpoint(nlohmann::json::parse(read_text_file(path)), round);
}

}  // namespace bcot
