#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hapsnet/common.hpp"
#include "hapsnet/scenario.hpp"

namespace hapsnet::channel {

using scenario::AreaKind;
using scenario::Topology;
using scenario::TxKind;

enum class DirectionalMode { off, as_paper };

struct FadingParams {
  double rician_k_db = 10.0;
  double shadow_std_db = 6.0;
  DirectionalMode directional_mode = DirectionalMode::off;
  double rural_elev_threshold_deg = 60.0;
  double urban_suburban_elev_threshold_deg = 10.0;
  double outofbeam_gain_db = -30.0;
  // The verbatim rule penalises ABOVE-threshold elevation angles (users near
  // the HAPS nadir). Set this to penalise below-threshold angles instead.
  bool invert_directional_rule = false;
};

struct LinkMeta {
  double distance_m = 0.0;
  double directional_gain_db = 0.0;
};

/// Complex channel vectors h_ij for every (transmitter, user) pair along with
/// per-link metadata. Vector length equals the transmitter's antenna count.
class ChannelSet {
 public:
  ChannelSet() = default;
  ChannelSet(int tx_count, int user_count)
      : tx_count_(tx_count), user_count_(user_count),
        h_(static_cast<std::size_t>(tx_count) * user_count),
        meta_(static_cast<std::size_t>(tx_count) * user_count) {}

  const Eigen::VectorXcd& h(int tx, int user) const { return h_[idx(tx, user)]; }
  Eigen::VectorXcd& h(int tx, int user) { return h_[idx(tx, user)]; }
  const LinkMeta& meta(int tx, int user) const { return meta_[idx(tx, user)]; }
  LinkMeta& meta(int tx, int user) { return meta_[idx(tx, user)]; }

  int tx_count() const { return tx_count_; }
  int user_count() const { return user_count_; }

 private:
  std::size_t idx(int tx, int user) const {
    return static_cast<std::size_t>(tx) * user_count_ + user;
  }

  int tx_count_ = 0;
  int user_count_ = 0;
  std::vector<Eigen::VectorXcd> h_;
  std::vector<LinkMeta> meta_;
};

/// Free-space amplitude gain c / (4 pi d f_c).
inline double path_loss_amplitude(double distance_m, double carrier_freq_hz) {
  if (distance_m <= 0.0)
    throw std::invalid_argument("path_loss_amplitude: distance must be positive");
  if (carrier_freq_hz <= 0.0)
    throw std::invalid_argument("path_loss_amplitude: carrier frequency must be positive");
  return kSpeedOfLight / (4.0 * std::numbers::pi * distance_m * carrier_freq_hz);
}

/// Draws the large-scale amplitude A and small-scale coefficient F for one
/// antenna. BS links: log-normal shadowing (std in dB on power) and Rayleigh
/// F with E|F|^2 = 1. HAPS links: A = 1 and Rician F with factor kappa,
/// E|F|^2 = 1, LoS phase fixed at 0.
inline std::pair<double, std::complex<double>> sample_fading(TxKind link_kind,
                                                             const FadingParams& params,
                                                             Rng& rng) {
  if (link_kind == TxKind::BS) {
    const double shadow_db = params.shadow_std_db * rng.normal();  // 10 log10(A^2)
    const double a = std::pow(10.0, shadow_db / 20.0);
    return {a, rng.cnormal()};
  }
  const double k = db_to_linear(params.rician_k_db);
  const std::complex<double> f =
      std::sqrt(k / (k + 1.0)) + std::sqrt(1.0 / (k + 1.0)) * rng.cnormal();
  return {1.0, f};
}

/// Elevation angle in degrees from a ground position to a HAPS position.
/// 90 degrees directly underneath.
inline double elevation_angle_deg(const Eigen::Vector3d& user_pos_km,
                                  const Eigen::Vector3d& haps_pos_km) {
  const double altitude = haps_pos_km.z() - user_pos_km.z();
  if (altitude <= 0.0)
    throw std::invalid_argument("elevation_angle: HAPS must be above the user");
  const double dx = user_pos_km.x() - haps_pos_km.x();
  const double dy = user_pos_km.y() - haps_pos_km.y();
  const double horiz = std::sqrt(dx * dx + dy * dy);
  if (horiz == 0.0) return 90.0;
  return std::atan(altitude / horiz) * 180.0 / std::numbers::pi;
}

/// Beamwidth penalty for HAPS antennas: rural deployments lose
/// `outofbeam_gain_db` above 60 degrees of elevation, urban/suburban above
/// 10 degrees (rule applied verbatim; see FadingParams for the invert flag).
inline double directional_gain_db(double theta_deg, AreaKind haps_area,
                                  const FadingParams& params) {
  const double threshold = haps_area == AreaKind::rural
                               ? params.rural_elev_threshold_deg
                               : params.urban_suburban_elev_threshold_deg;
  const bool outside = params.invert_directional_rule ? theta_deg < threshold
                                                      : theta_deg > threshold;
  return outside ? params.outofbeam_gain_db : 0.0;
}

/// Samples h_ij,n = pathloss * gain * A * F for every link and antenna.
/// Per-antenna distances collapse to the per-link distance; each link draws
/// from its own substream of `seed`, so links can be sampled in any order.
inline ChannelSet build_channels(const Topology& topo, const FadingParams& params,
                                 std::uint64_t seed) {
  ChannelSet set(topo.tx_count(), topo.user_count());
  for (int i = 0; i < topo.tx_count(); ++i) {
    const scenario::Transmitter& tx = topo.transmitters[i];
    for (int j = 0; j < topo.user_count(); ++j) {
      const scenario::User& user = topo.users[j];
      const double d_m = (tx.position_km - user.position_km).norm() * 1e3;
      const double pl = path_loss_amplitude(d_m, topo.carrier_freq_hz);

      double gain_db = 0.0;
      if (tx.kind == TxKind::HAPS && params.directional_mode == DirectionalMode::as_paper) {
        const double theta = elevation_angle_deg(user.position_km, tx.position_km);
        gain_db = directional_gain_db(theta, tx.area, params);
      }
      const double gain_amp = std::pow(10.0, gain_db / 20.0);

      Rng rng(derive_stream(seed, 0x6c696e6bULL, static_cast<std::uint64_t>(i),
                            static_cast<std::uint64_t>(j)));
      Eigen::VectorXcd h(tx.antenna_count);
      for (int n = 0; n < tx.antenna_count; ++n) {
        const auto [a, f] = sample_fading(tx.kind, params, rng);
        h(n) = pl * gain_amp * a * f;
      }
      set.h(i, j) = std::move(h);
      set.meta(i, j) = {d_m, gain_db};
    }
  }
  return set;
}

// --- regression fixture dump/load ---------------------------------------
//
// Text format, one link per row, hexfloat fields so round-trips are
// bit-exact:
//   hapsnet-channels v1
//   <tx_count> <user_count>
//   <tx> <user> <distance_m> <gain_db> <re_0> <im_0> <re_1> <im_1> ...

inline void dump_channels(const ChannelSet& set, std::ostream& out) {
  out << "hapsnet-channels v1\n" << set.tx_count() << ' ' << set.user_count() << '\n';
  out << std::hexfloat;
  for (int i = 0; i < set.tx_count(); ++i)
    for (int j = 0; j < set.user_count(); ++j) {
      const auto& h = set.h(i, j);
      const auto& m = set.meta(i, j);
      out << i << ' ' << j << ' ' << m.distance_m << ' ' << m.directional_gain_db;
      for (int n = 0; n < h.size(); ++n) out << ' ' << h(n).real() << ' ' << h(n).imag();
      out << '\n';
    }
}

inline void dump_channels(const ChannelSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_channels: cannot open " + path);
  dump_channels(set, out);
}

inline ChannelSet load_channels(std::istream& in) {
  std::string header, version;
  in >> header >> version;
  if (header != "hapsnet-channels" || version != "v1")
    throw std::runtime_error("load_channels: bad header");
  int tx_count = 0, user_count = 0;
  in >> tx_count >> user_count;
  ChannelSet set(tx_count, user_count);
  std::string line;
  std::getline(in, line);
  // operator>> does not parse hexfloat; tokenize and use strtod instead.
  const auto to_double = [](const std::string& tok) { return std::strtod(tok.c_str(), nullptr); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int i = 0, j = 0;
    std::string tok;
    row >> i >> j;
    row >> tok;
    const double d = to_double(tok);
    row >> tok;
    const double g = to_double(tok);
    std::vector<std::complex<double>> coeffs;
    while (row >> tok) {
      const double re = to_double(tok);
      if (!(row >> tok)) throw std::runtime_error("load_channels: odd coefficient count");
      coeffs.emplace_back(re, to_double(tok));
    }
    Eigen::VectorXcd h(coeffs.size());
    for (std::size_t n = 0; n < coeffs.size(); ++n) h(static_cast<int>(n)) = coeffs[n];
    set.h(i, j) = std::move(h);
    set.meta(i, j) = {d, g};
  }
  return set;
}

inline ChannelSet load_channels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_channels: cannot open " + path);
  return load_channels(in);
}

}  // namespace hapsnet::channel
