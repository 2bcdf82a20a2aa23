#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hapsnet/common.hpp"

namespace hapsnet::scenario {

enum class AreaKind { urban, suburban, rural };
enum class TxKind { HAPS, BS };

inline const char* to_string(AreaKind k) {
  switch (k) {
    case AreaKind::urban: return "urban";
    case AreaKind::suburban: return "suburban";
    default: return "rural";
  }
}

inline const char* to_string(TxKind k) { return k == TxKind::HAPS ? "HAPS" : "BS"; }

inline AreaKind area_kind_from_string(const std::string& s) {
  if (s == "urban") return AreaKind::urban;
  if (s == "suburban") return AreaKind::suburban;
  if (s == "rural") return AreaKind::rural;
  throw std::invalid_argument("unknown area kind: " + s);
}

/// One deployment area: a rectangle holding a share of the users and a
/// number of ground base stations with a common power cap.
struct AreaSpec {
  AreaKind kind = AreaKind::urban;
  std::array<double, 2> x_km{0.0, 0.0};
  std::array<double, 2> y_km{0.0, 0.0};
  double user_fraction = 0.0;
  int bs_count = 0;
  double bs_power_cap_w = 1.0;
};

struct Transmitter {
  int id = 0;
  TxKind kind = TxKind::BS;
  Eigen::Vector3d position_km = Eigen::Vector3d::Zero();
  int antenna_count = 1;
  double power_cap_w = 1.0;
  int payload_cap = 1;  // users; BSs are effectively uncapped
  AreaKind area = AreaKind::urban;
};

struct User {
  int id = 0;
  Eigen::Vector3d position_km = Eigen::Vector3d::Zero();
  double weight = 1.0;
  double min_rate_bps = 0.0;
};

struct Topology {
  std::vector<Transmitter> transmitters;
  std::vector<User> users;
  double bandwidth_hz = 10e6;
  double noise_power_w = 0.0;
  double carrier_freq_hz = 2e9;
  Eigen::MatrixXi availability;  // beta, transmitters x users

  int tx_count() const { return static_cast<int>(transmitters.size()); }
  int user_count() const { return static_cast<int>(users.size()); }
};

struct HapsSpec {
  Eigen::Vector3d position_km = Eigen::Vector3d::Zero();
  AreaKind area = AreaKind::rural;
};

/// Declarative scenario description; `build_topology` turns it into a
/// concrete Topology. Loadable from the JSON config schema (see README).
struct ScenarioConfig {
  double bandwidth_hz = 10e6;
  double carrier_freq_hz = 2e9;
  double noise_figure_db = 7.0;
  std::optional<double> noise_power_w;  // overrides the figure-based value
  int users = 0;
  std::uint64_t seed = 0;
  std::vector<AreaSpec> areas;
  std::vector<HapsSpec> haps;
  int bs_antennas = 3;
  int haps_antennas = 50;
  double haps_power_cap_w = 100.0;
  int haps_payload_cap = 30;
  double bs_height_km = 0.025;
  double default_weight = 1.0;
  double default_min_rate_bps = 0.0;
  std::vector<double> user_weights;    // optional, size == users when present
  std::vector<double> user_min_rates;  // optional, size == users when present
  std::vector<std::array<int, 3>> beta_overrides;  // (tx, user, 0/1)
  std::array<double, 2> region_x_km{0.0, 100.0};
  std::array<double, 2> region_y_km{0.0, 100.0};
};

inline double noise_power_from_figure(double bandwidth_hz, double noise_figure_db) {
  const double dbm = -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
  return std::pow(10.0, (dbm - 30.0) / 10.0);
}

/// Largest-remainder apportionment of n items across the given fractions.
/// Ties in remainder go to the lower index.
inline std::vector<int> largest_remainder_counts(const std::vector<double>& fractions, int n) {
  const int k = static_cast<int>(fractions.size());
  std::vector<int> counts(k, 0);
  std::vector<std::pair<double, int>> rem(k);
  int assigned = 0;
  for (int a = 0; a < k; ++a) {
    const double exact = fractions[a] * n;
    counts[a] = static_cast<int>(std::floor(exact));
    rem[a] = {exact - counts[a], a};
    assigned += counts[a];
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& l, const auto& r) {
    return l.first > r.first;
  });
  for (int i = 0; i < n - assigned; ++i) counts[rem[i % k].second] += 1;
  return counts;
}

namespace detail {
constexpr std::uint64_t kBsStream = 101;
constexpr std::uint64_t kUserStream = 202;
}  // namespace detail

/// Samples `counts[a]` positions uniformly inside each area rectangle.
/// Deterministic in (config, seed); entity k always draws from its own
/// substream, so prefixes are stable under appended entities.
inline std::vector<Eigen::Vector2d> generate_positions(const std::vector<AreaSpec>& areas,
                                                       const std::vector<int>& counts,
                                                       std::uint64_t seed,
                                                       std::uint64_t stream_tag) {
  if (areas.size() != counts.size())
    throw std::invalid_argument("generate_positions: counts/areas size mismatch");
  std::vector<Eigen::Vector2d> out;
  int k = 0;
  for (std::size_t a = 0; a < areas.size(); ++a) {
    const AreaSpec& spec = areas[a];
    for (int c = 0; c < counts[a]; ++c, ++k) {
      Rng rng(derive_stream(seed, stream_tag, static_cast<std::uint64_t>(k)));
      out.emplace_back(rng.uniform(spec.x_km[0], spec.x_km[1]),
                       rng.uniform(spec.y_km[0], spec.y_km[1]));
    }
  }
  return out;
}

inline void validate(const ScenarioConfig& cfg) {
  if (cfg.users < 1) throw std::invalid_argument("scenario: users must be >= 1");
  if (cfg.areas.empty()) throw std::invalid_argument("scenario: at least one area required");
  if (cfg.bandwidth_hz <= 0 || cfg.carrier_freq_hz <= 0)
    throw std::invalid_argument("scenario: bandwidth and carrier frequency must be positive");
  double frac = 0.0;
  for (const AreaSpec& a : cfg.areas) {
    if (a.user_fraction < 0.0 || a.user_fraction > 1.0)
      throw std::invalid_argument("scenario: user_fraction outside [0,1]");
    if (a.bs_count < 0) throw std::invalid_argument("scenario: bs_count negative");
    if (a.x_km[1] <= a.x_km[0] || a.y_km[1] <= a.y_km[0])
      throw std::invalid_argument("scenario: degenerate area rectangle");
    if (a.bs_count > 0 && a.bs_power_cap_w <= 0)
      throw std::invalid_argument("scenario: bs_power_cap_w must be positive");
    frac += a.user_fraction;
  }
  if (std::abs(frac - 1.0) > 1e-9)
    throw std::invalid_argument("scenario: user fractions must sum to 1");
  if (cfg.haps_antennas < 1 || cfg.bs_antennas < 1)
    throw std::invalid_argument("scenario: antenna counts must be >= 1");
  if (!cfg.haps.empty() && cfg.haps_payload_cap < 1)
    throw std::invalid_argument("scenario: haps_payload_cap must be >= 1");
  for (const HapsSpec& h : cfg.haps)
    if (h.position_km.z() <= 0)
      throw std::invalid_argument("scenario: HAPS altitude must be positive");
  if (!cfg.user_weights.empty() && cfg.user_weights.size() != static_cast<std::size_t>(cfg.users))
    throw std::invalid_argument("scenario: user_weights size mismatch");
  if (!cfg.user_min_rates.empty() &&
      cfg.user_min_rates.size() != static_cast<std::size_t>(cfg.users))
    throw std::invalid_argument("scenario: user_min_rates size mismatch");
}

inline Topology build_topology(const ScenarioConfig& cfg) {
  validate(cfg);

  Topology topo;
  topo.bandwidth_hz = cfg.bandwidth_hz;
  topo.carrier_freq_hz = cfg.carrier_freq_hz;
  topo.noise_power_w =
      cfg.noise_power_w ? *cfg.noise_power_w
                        : noise_power_from_figure(cfg.bandwidth_hz, cfg.noise_figure_db);

  // HAPSs first so that I = I_HAPS ∪ I_BS keeps the paper's index order.
  int id = 0;
  for (const HapsSpec& h : cfg.haps) {
    Transmitter tx;
    tx.id = id++;
    tx.kind = TxKind::HAPS;
    tx.position_km = h.position_km;
    tx.antenna_count = cfg.haps_antennas;
    tx.power_cap_w = cfg.haps_power_cap_w;
    tx.payload_cap = cfg.haps_payload_cap;
    tx.area = h.area;
    topo.transmitters.push_back(tx);
  }

  std::vector<int> bs_counts;
  bs_counts.reserve(cfg.areas.size());
  for (const AreaSpec& a : cfg.areas) bs_counts.push_back(a.bs_count);
  const auto bs_pos = generate_positions(cfg.areas, bs_counts, cfg.seed, detail::kBsStream);
  {
    int k = 0;
    for (std::size_t a = 0; a < cfg.areas.size(); ++a) {
      for (int c = 0; c < cfg.areas[a].bs_count; ++c, ++k) {
        Transmitter tx;
        tx.id = id++;
        tx.kind = TxKind::BS;
        tx.position_km = {bs_pos[k].x(), bs_pos[k].y(), cfg.bs_height_km};
        tx.antenna_count = cfg.bs_antennas;
        tx.power_cap_w = cfg.areas[a].bs_power_cap_w;
        tx.payload_cap = cfg.users;  // uncapped in practice
        tx.area = cfg.areas[a].kind;
        topo.transmitters.push_back(tx);
      }
    }
  }
  if (topo.transmitters.empty())
    throw std::invalid_argument("scenario: no transmitters (need at least one BS or HAPS)");

  std::vector<double> fractions;
  fractions.reserve(cfg.areas.size());
  for (const AreaSpec& a : cfg.areas) fractions.push_back(a.user_fraction);
  const auto user_counts = largest_remainder_counts(fractions, cfg.users);
  {
    int total = 0;
    for (int c : user_counts) total += c;
    if (total != cfg.users)
      throw std::logic_error("scenario: user apportionment does not add up");
  }
  const auto user_pos = generate_positions(cfg.areas, user_counts, cfg.seed, detail::kUserStream);
  for (int j = 0; j < cfg.users; ++j) {
    User u;
    u.id = j;
    u.position_km = {user_pos[j].x(), user_pos[j].y(), 0.0};
    u.weight = cfg.user_weights.empty() ? cfg.default_weight : cfg.user_weights[j];
    u.min_rate_bps = cfg.user_min_rates.empty() ? cfg.default_min_rate_bps : cfg.user_min_rates[j];
    if (u.weight < 0) throw std::invalid_argument("scenario: negative user weight");
    if (u.min_rate_bps < 0) throw std::invalid_argument("scenario: negative min rate");
    topo.users.push_back(u);
  }

  topo.availability = Eigen::MatrixXi::Ones(topo.tx_count(), topo.user_count());
  for (const auto& ov : cfg.beta_overrides) {
    if (ov[0] < 0 || ov[0] >= topo.tx_count() || ov[1] < 0 || ov[1] >= topo.user_count())
      throw std::invalid_argument("scenario: beta override out of range");
    if (ov[2] != 0 && ov[2] != 1)
      throw std::invalid_argument("scenario: beta override must be 0 or 1");
    topo.availability(ov[0], ov[1]) = ov[2];
  }
  return topo;
}

/// The paper-scale three-area layout: 30 urban BSs in [0,5]^2 km serving 50%
/// of users, 14 suburban BSs in [25,30]x[85,90] km serving 30%, and a rural
/// area (default 30 km square centred on (15,45)) holding the remaining 20%.
/// HAPSs are added at the rural, suburban and urban centres in that order.
inline ScenarioConfig builtin_config(int n_haps, int n_users, std::uint64_t seed,
                                     double rural_side_km = 30.0) {
  if (n_haps < 0 || n_haps > 3)
    throw std::invalid_argument("builtin_config: n_haps must be in 0..3");
  ScenarioConfig cfg;
  cfg.users = n_users;
  cfg.seed = seed;
  cfg.areas = {
      {AreaKind::urban, {0.0, 5.0}, {0.0, 5.0}, 0.5, 30, 1.0},
      {AreaKind::suburban, {25.0, 30.0}, {85.0, 90.0}, 0.3, 14, 2.0},
      {AreaKind::rural,
       {15.0 - rural_side_km / 2, 15.0 + rural_side_km / 2},
       {45.0 - rural_side_km / 2, 45.0 + rural_side_km / 2},
       0.2, 0, 10.0},
  };
  const std::vector<HapsSpec> all_haps = {
      {{15.0, 45.0, 20.0}, AreaKind::rural},
      {{27.5, 87.5, 20.0}, AreaKind::suburban},
      {{2.5, 2.5, 20.0}, AreaKind::urban},
  };
  cfg.haps.assign(all_haps.begin(), all_haps.begin() + n_haps);
  return cfg;
}

inline Topology builtin_scenario(int n_haps, int n_users, std::uint64_t seed) {
  return build_topology(builtin_config(n_haps, n_users, seed));
}

/// Shrunk three-area layout that keeps the builtin structure but runs in
/// seconds: 2+1 BSs, up to 2 HAPSs, few-antenna arrays. Used by the test and
/// acceptance suites and handy for quick CLI runs.
inline ScenarioConfig desk_config(int n_haps, int n_users, std::uint64_t seed) {
  if (n_haps < 0 || n_haps > 2)
    throw std::invalid_argument("desk_config: n_haps must be in 0..2");
  ScenarioConfig cfg;
  cfg.users = n_users;
  cfg.seed = seed;
  cfg.areas = {
      {AreaKind::urban, {0.0, 2.0}, {0.0, 2.0}, 0.5, 2, 1.0},
      {AreaKind::suburban, {7.0, 9.0}, {7.0, 9.0}, 0.3, 1, 2.0},
      {AreaKind::rural, {3.0, 6.0}, {3.0, 6.0}, 0.2, 0, 10.0},
  };
  const std::vector<HapsSpec> all_haps = {
      {{4.5, 4.5, 20.0}, AreaKind::rural},
      {{8.0, 8.0, 20.0}, AreaKind::suburban},
  };
  cfg.haps.assign(all_haps.begin(), all_haps.begin() + n_haps);
  cfg.bs_antennas = 3;
  cfg.haps_antennas = 4;
  cfg.haps_payload_cap = 4;
  return cfg;
}

inline Topology desk_scenario(int n_haps, int n_users, std::uint64_t seed) {
  return build_topology(desk_config(n_haps, n_users, seed));
}

// --- JSON config loading -----------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                const std::vector<std::string>& known,
                                const std::string& where) {
  for (const auto& item : obj.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in " + where);
  }
}

inline AreaSpec parse_area(const nlohmann::json& j) {
  reject_unknown_keys(j, {"kind", "x_km", "y_km", "user_fraction", "bs_count", "bs_power_cap_w"},
                      "areas[]");
  AreaSpec a;
  a.kind = area_kind_from_string(j.at("kind").get<std::string>());
  a.x_km = {j.at("x_km").at(0).get<double>(), j.at("x_km").at(1).get<double>()};
  a.y_km = {j.at("y_km").at(0).get<double>(), j.at("y_km").at(1).get<double>()};
  a.user_fraction = j.at("user_fraction").get<double>();
  a.bs_count = j.value("bs_count", 0);
  a.bs_power_cap_w = j.value("bs_power_cap_w", 1.0);
  return a;
}

inline HapsSpec parse_haps(const nlohmann::json& j) {
  reject_unknown_keys(j, {"position_km", "area"}, "haps[]");
  HapsSpec h;
  h.position_km = {j.at("position_km").at(0).get<double>(),
                   j.at("position_km").at(1).get<double>(),
                   j.at("position_km").at(2).get<double>()};
  h.area = area_kind_from_string(j.at("area").get<std::string>());
  return h;
}

}  // namespace detail

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j,
      {"bandwidth_hz", "carrier_freq_hz", "noise_figure_db", "noise_power_w", "users", "seed",
       "areas", "haps", "bs_antennas", "haps_antennas", "haps_power_cap_w", "haps_payload_cap",
       "bs_height_km", "default_weight", "default_min_rate_bps", "user_weights",
       "user_min_rates", "beta_overrides", "region_x_km", "region_y_km"},
      "config root");
  ScenarioConfig cfg;
  cfg.bandwidth_hz = j.value("bandwidth_hz", cfg.bandwidth_hz);
  cfg.carrier_freq_hz = j.value("carrier_freq_hz", cfg.carrier_freq_hz);
  cfg.noise_figure_db = j.value("noise_figure_db", cfg.noise_figure_db);
  if (j.contains("noise_power_w")) cfg.noise_power_w = j.at("noise_power_w").get<double>();
  cfg.users = j.value("users", cfg.users);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("areas"))
    for (const auto& a : j.at("areas")) cfg.areas.push_back(detail::parse_area(a));
  if (j.contains("haps"))
    for (const auto& h : j.at("haps")) cfg.haps.push_back(detail::parse_haps(h));
  cfg.bs_antennas = j.value("bs_antennas", cfg.bs_antennas);
  cfg.haps_antennas = j.value("haps_antennas", cfg.haps_antennas);
  cfg.haps_power_cap_w = j.value("haps_power_cap_w", cfg.haps_power_cap_w);
  cfg.haps_payload_cap = j.value("haps_payload_cap", cfg.haps_payload_cap);
  cfg.bs_height_km = j.value("bs_height_km", cfg.bs_height_km);
  cfg.default_weight = j.value("default_weight", cfg.default_weight);
  cfg.default_min_rate_bps = j.value("default_min_rate_bps", cfg.default_min_rate_bps);
  if (j.contains("user_weights"))
    cfg.user_weights = j.at("user_weights").get<std::vector<double>>();
  if (j.contains("user_min_rates"))
    cfg.user_min_rates = j.at("user_min_rates").get<std::vector<double>>();
  if (j.contains("beta_overrides"))
    for (const auto& ov : j.at("beta_overrides"))
      cfg.beta_overrides.push_back({ov.at(0).get<int>(), ov.at(1).get<int>(), ov.at(2).get<int>()});
  if (j.contains("region_x_km"))
    cfg.region_x_km = {j.at("region_x_km").at(0).get<double>(), j.at("region_x_km").at(1).get<double>()};
  if (j.contains("region_y_km"))
    cfg.region_y_km = {j.at("region_y_km").at(0).get<double>(), j.at("region_y_km").at(1).get<double>()};
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

}  // namespace hapsnet::scenario
