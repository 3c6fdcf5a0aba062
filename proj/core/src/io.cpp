#include "rlqls/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rlqls/error.hpp"

namespace rlqls {

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

nlohmann::json to_json(const IsingProblem& problem) {
  nlohmann::json couplings = nlohmann::json::array();
  const std::size_t n = problem.n();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      couplings.push_back(nlohmann::json::array({i, j, problem.coupling(i, j)}));
  nlohmann::json j;
  j["id"] = problem.id();
  j["n"] = n;
  j["couplings"] = std::move(couplings);
  j["fields"] = std::vector<double>(problem.fields().begin(), problem.fields().end());
  if (const auto& ref = problem.gse_ref()) {
    j["gse_ref"] = ref->energy;
    j["gse_provenance"] = to_string(ref->provenance);
  } else {
    j["gse_ref"] = nullptr;
    j["gse_provenance"] = nullptr;
  }
  return j;
}

IsingProblem problem_from_json(const nlohmann::json& j) {
  try {
    const auto n = j.at("n").get<std::size_t>();
    RLQLS_REQUIRE(n >= 1, "instance n must be positive");
    std::vector<double> upper(IsingProblem::pair_count(n), 0.0);
    std::vector<char> seen(upper.size(), 0);
    for (const auto& c : j.at("couplings")) {
      RLQLS_REQUIRE(c.is_array() && c.size() == 3, "coupling entries must be [i, j, J]");
      const auto i = c[0].get<std::size_t>();
      const auto k = c[1].get<std::size_t>();
      RLQLS_REQUIRE(i < k && k < n, "coupling keys must satisfy 0 <= i < j < n");
      // Row-major offset of (i, k) in the strict upper triangle.
      const std::size_t pos = i * n - i * (i + 1) / 2 + (k - i - 1);
      RLQLS_REQUIRE(!seen[pos], "duplicate coupling key");
      seen[pos] = 1;
      upper[pos] = c[2].get<double>();
    }
    IsingProblem p(j.at("id").get<std::string>(), n, upper,
                   j.at("fields").get<std::vector<double>>());
    if (j.contains("gse_ref") && !j["gse_ref"].is_null()) {
      GseRef ref{j["gse_ref"].get<double>(), GseProvenance::kTabu};
      if (j.contains("gse_provenance") && !j["gse_provenance"].is_null())
        ref.provenance = parse_provenance(j["gse_provenance"].get<std::string>());
      p.set_gse_ref(ref);
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed instance JSON: ") + e.what());
  }
}

nlohmann::json to_json(const InstanceSet& set) {
  nlohmann::json problems = nlohmann::json::array();
  for (const auto& p : set.problems) problems.push_back(to_json(p));
  nlohmann::json j;
  j["seed"] = set.seed;
  j["kind"] = set.kind;
  j["problems"] = std::move(problems);
  return j;
}

InstanceSet instance_set_from_json(const nlohmann::json& j) {
  InstanceSet set;
  try {
    set.seed = j.at("seed").get<std::uint64_t>();
    set.kind = j.at("kind").get<std::string>();
    for (const auto& p : j.at("problems")) set.problems.push_back(problem_from_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed instance set JSON: ") + e.what());
  }
  return set;
}

void save_instance_set(const std::filesystem::path& path, const InstanceSet& set) {
  write_text_file(path, to_json(set).dump(2) + "\n");
}

InstanceSet load_instance_set(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError("cannot parse " + path.string() + ": " + e.what());
  }
  return instance_set_from_json(j);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace rlqls
