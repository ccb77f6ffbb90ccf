#include "opdyn/spectroscopy.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "opdyn/error.hpp"

namespace opdyn {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// FFTW planning is not thread safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::string to_string(Window w) { return w == Window::kHann ? "hann" : "rectangular"; }

Window parse_window(const std::string& s) {
  if (s == "rectangular" || s == "rect") return Window::kRectangular;
  if (s == "hann") return Window::kHann;
  throw ConfigError("unknown window '" + s + "'");
}

double Spectrum::frequency(std::size_t k) const { return omega[k] / kTwoPi; }
double Peak::frequency() const { return omega / kTwoPi; }

ComplexSeries assemble_two_point(const Trajectory& pred, const TfimSystem& sys, const Observable& o) {
  pred.validate();
  if (pred.basis.n_sites() != sys.spec().n_sites) {
    throw ConfigError("trajectory basis has " + std::to_string(pred.basis.n_sites()) + " sites, system has " +
                      std::to_string(sys.spec().n_sites));
  }
  const auto w = ground_state_weights(sys, o, pred.basis);
  if (w.size() != pred.dim()) throw ConfigError("missing ground-state weight for a basis element");
  Eigen::VectorXcd weights(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) weights(static_cast<Eigen::Index>(i)) = w[i];
  const Eigen::VectorXcd c = pred.coeffs.cast<std::complex<double>>() * weights;
  return ComplexSeries(c.data(), c.data() + c.size());
}

Spectrum fft_spectrum(std::span<const double> times, const ComplexSeries& series, Window window) {
  const std::size_t m = series.size();
  if (m < 2 || times.size() != m) throw ConfigError("spectrum needs at least two samples with matching times");
  const double dt = times[1] - times[0];
  if (!(dt > 0.0)) throw ConfigError("time grid must be increasing");
  for (std::size_t j = 0; j < m; ++j) {
    const double expect = times[0] + static_cast<double>(j) * dt;
    if (std::abs(times[j] - expect) > 1e-9 * std::max(1.0, std::abs(expect))) {
      throw ConfigError("spectrum needs a uniform time grid (t[" + std::to_string(j) + "] off)");
    }
    if (!std::isfinite(series[j].real()) || !std::isfinite(series[j].imag())) {
      throw NumericalError("non-finite sample in series");
    }
  }
  std::vector<std::complex<double>> in(m);
  std::vector<std::complex<double>> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    double w = 1.0;
    if (window == Window::kHann) w = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(j) / static_cast<double>(m)));
    in[j] = w * series[j];
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(m), reinterpret_cast<fftw_complex*>(in.data()),
                                      reinterpret_cast<fftw_complex*>(out.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  Spectrum s;
  s.window = window;
  s.dt = dt;
  s.span = static_cast<double>(m) * dt;
  s.resolution = kTwoPi / s.span;
  const long half = static_cast<long>(m / 2);
  for (std::size_t idx = 0; idx < m; ++idx) {
    const long k = static_cast<long>(idx) - half;
    const std::size_t src = static_cast<std::size_t>((k + static_cast<long>(m)) % static_cast<long>(m));
    const double omega = static_cast<double>(k) * s.resolution;
    s.omega.push_back(omega);
    s.amplitude.push_back(dt * std::polar(1.0, omega * times[0]) * out[src]);
  }
  s.meta.set("window", to_string(window));
  s.meta.set("dt", format_double(dt));
  s.meta.set("span", format_double(s.span));
  s.meta.set("resolution", format_double(s.resolution));
  s.meta.set("t_start", format_double(times[0]));
  s.meta.set("n_samples", std::to_string(m));
  return s;
}

PeakList find_peaks(const Spectrum& spec, double threshold_fraction) {
  if (spec.size() == 0) throw ConfigError("empty spectrum");
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0)) {
    throw ConfigError("threshold_fraction must lie in (0, 1)");
  }
  PeakList out;
  out.threshold_fraction = threshold_fraction;
  const std::size_t m = spec.size();
  std::vector<double> mag(m);
  for (std::size_t k = 0; k < m; ++k) mag[k] = spec.magnitude(k);
  const double top = *std::max_element(mag.begin(), mag.end());
  if (!(top > 0.0) || m < 3) return out;
  auto at = [&](long k) { return static_cast<std::size_t>((k % static_cast<long>(m) + static_cast<long>(m)) % static_cast<long>(m)); };
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t kl = at(static_cast<long>(k) - 1);
    const std::size_t kr = at(static_cast<long>(k) + 1);
    const double a = mag[kl];
    const double b = mag[k];
    const double c = mag[kr];
    if (!(b > a && b >= c && b > threshold_fraction * top)) continue;
    double delta = 0.0;
    const double denom = a - 2.0 * b + c;
    if (spec.window == Window::kRectangular) {
      const auto xl = spec.amplitude[kl];
      const auto xc = spec.amplitude[k];
      const auto xr = spec.amplitude[kr];
      const auto den = 2.0 * xc - xl - xr;
      if (std::abs(den) > 0.0) {
        const double x = std::numbers::pi / static_cast<double>(m);
        delta = std::tan(x) / x * ((xl - xr) / den).real();
      }
    } else if (denom != 0.0) {
      delta = 0.5 * (a - c) / denom;
    }
    delta = std::clamp(delta, -1.0, 1.0);
    Peak p;
    p.omega = spec.omega[k] + delta * spec.resolution;
    p.magnitude = denom != 0.0 ? b - 0.25 * (a - c) * (0.5 * (a - c) / denom) : b;
    // Half maximum crossings by linear interpolation, walking outwards.
    const double half = 0.5 * b;
    auto crossing = [&](int dir) {
      long j = static_cast<long>(k);
      for (std::size_t steps = 0; steps < m; ++steps) {
        const std::size_t cur = at(j);
        const std::size_t nxt = at(j + dir);
        if (mag[nxt] < half) {
          const double frac = (mag[cur] - half) / (mag[cur] - mag[nxt]);
          return (static_cast<double>(j - static_cast<long>(k)) + dir * frac) * spec.resolution;
        }
        j += dir;
      }
      return dir * static_cast<double>(m) * spec.resolution;
    };
    p.half_width = 0.5 * (crossing(1) - crossing(-1));
    out.peaks.push_back(p);
  }
  std::sort(out.peaks.begin(), out.peaks.end(), [](const Peak& x, const Peak& y) { return x.omega < y.omega; });
  for (const auto& p : out.peaks) {
    if (p.omega > spec.resolution) {
      out.gap_estimate = p.omega;
      break;
    }
  }
  return out;
}

SpectrumComparison compare_peaks(const PeakList& a, double resolution_a, const PeakList& b, double resolution_b) {
  SpectrumComparison r;
  r.resolution_a = resolution_a;
  r.resolution_b = resolution_b;
  r.tolerance = std::max(resolution_a, resolution_b);
  struct Pair {
    double dist;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < a.peaks.size(); ++i) {
    for (std::size_t j = 0; j < b.peaks.size(); ++j) {
      const double d = std::abs(a.peaks[i].omega - b.peaks[j].omega);
      if (d <= r.tolerance) pairs.push_back({d, i, j});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.dist < y.dist; });
  std::vector<bool> used_a(a.peaks.size(), false);
  std::vector<bool> used_b(b.peaks.size(), false);
  for (const auto& p : pairs) {
    if (used_a[p.i] || used_b[p.j]) continue;
    used_a[p.i] = used_b[p.j] = true;
    r.matched.push_back({a.peaks[p.i].omega, b.peaks[p.j].omega, b.peaks[p.j].omega - a.peaks[p.i].omega});
  }
  std::sort(r.matched.begin(), r.matched.end(), [](const PeakMatch& x, const PeakMatch& y) { return x.omega_a < y.omega_a; });
  auto near_any = [](double w, const PeakList& other, double res) {
    return std::any_of(other.peaks.begin(), other.peaks.end(),
                       [&](const Peak& p) { return std::abs(p.omega - w) <= res; });
  };
  for (std::size_t i = 0; i < a.peaks.size(); ++i) {
    if (used_a[i]) continue;
    r.unmatched_a.push_back(a.peaks[i].omega);
    if (near_any(a.peaks[i].omega, b, resolution_b)) r.unresolved_a.push_back(a.peaks[i].omega);
  }
  for (std::size_t j = 0; j < b.peaks.size(); ++j) {
    if (used_b[j]) continue;
    r.unmatched_b.push_back(b.peaks[j].omega);
    if (near_any(b.peaks[j].omega, a, resolution_a)) r.unresolved_b.push_back(b.peaks[j].omega);
  }
  return r;
}

SpectrumComparison compare_spectra(const Spectrum& a, const Spectrum& b, double threshold_fraction) {
  return compare_peaks(find_peaks(a, threshold_fraction), a.resolution, find_peaks(b, threshold_fraction),
                       b.resolution);
}

bool is_low_resolution(const Spectrum& spec, double max_resolution) { return spec.resolution > max_resolution; }

void write_spectrum(std::ostream& out, const Spectrum& spec) {
  out << kSpectrumHeader << '\n';
  for (const auto& [k, v] : spec.meta.entries()) out << k << '=' << v << '\n';
  out << "omega f magnitude re im\n";
  for (std::size_t k = 0; k < spec.size(); ++k) {
    out << format_double(spec.omega[k]) << ' ' << format_double(spec.frequency(k)) << ' '
        << format_double(spec.magnitude(k)) << ' ' << format_double(spec.amplitude[k].real()) << ' '
        << format_double(spec.amplitude[k].imag()) << '\n';
  }
}

void write_spectrum(const std::filesystem::path& path, const Spectrum& spec) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_spectrum(out, spec);
  if (!out) throw FormatError("failed writing " + path.string());
}

Spectrum read_spectrum(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kSpectrumHeader) throw FormatError("missing opdyn-spec v1 header");
  Spectrum s;
  bool have_columns = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!have_columns) {
      if (line == "omega f magnitude re im") {
        have_columns = true;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("bad spectrum metadata line: " + line);
      s.meta.set(line.substr(0, eq), line.substr(eq + 1));
      continue;
    }
    std::istringstream row(line);
    double omega, f, mag, re, im;
    if (!(row >> omega >> f >> mag >> re >> im)) throw FormatError("bad spectrum row: " + line);
    s.omega.push_back(omega);
    s.amplitude.emplace_back(re, im);
  }
  if (!have_columns || s.omega.size() < 2) throw FormatError("spectrum file has no data rows");
  auto num = [&](const char* key) {
    const auto v = s.meta.get(key);
    if (!v) throw FormatError(std::string("spectrum metadata lacks ") + key);
    return std::stod(*v);
  };
  s.window = parse_window(s.meta.get("window").value_or("rectangular"));
  s.dt = num("dt");
  s.span = num("span");
  s.resolution = num("resolution");
  return s;
}

Spectrum read_spectrum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_spectrum(in);
}

void write_peaks(std::ostream& out, const PeakList& peaks, const Spectrum& spec, bool low_resolution) {
  out << kPeaksHeader << '\n'
      << "window=" << to_string(spec.window) << '\n'
      << "threshold_fraction=" << format_double(peaks.threshold_fraction) << '\n'
      << "resolution=" << format_double(spec.resolution) << '\n'
      << "low_resolution=" << (low_resolution ? 1 : 0) << '\n'
      << "n_peaks=" << peaks.peaks.size() << '\n';
  if (peaks.gap_estimate) {
    out << "gap_omega=" << format_double(*peaks.gap_estimate) << '\n'
        << "gap_f=" << format_double(*peaks.gap_estimate / kTwoPi) << '\n';
  } else {
    out << "gap_omega=none\ngap_f=none\n";
  }
  for (std::size_t i = 0; i < peaks.peaks.size(); ++i) {
    const auto& p = peaks.peaks[i];
    out << "peak." << i << '=' << format_double(p.omega) << ' ' << format_double(p.frequency()) << ' '
        << format_double(p.magnitude) << ' ' << format_double(p.half_width) << '\n';
  }
}

void write_comparison(std::ostream& out, const SpectrumComparison& cmp) {
  auto list = [&](const char* key, const std::vector<double>& v) {
    out << key << '=';
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v[i]);
    out << '\n';
  };
  out << "tolerance=" << format_double(cmp.tolerance) << '\n'
      << "resolution_a=" << format_double(cmp.resolution_a) << '\n'
      << "resolution_b=" << format_double(cmp.resolution_b) << '\n'
      << "n_matched=" << cmp.matched.size() << '\n';
  for (std::size_t i = 0; i < cmp.matched.size(); ++i) {
    const auto& m = cmp.matched[i];
    out << "match." << i << '=' << format_double(m.omega_a) << ' ' << format_double(m.omega_b) << ' '
        << format_double(m.delta) << '\n';
  }
  list("unmatched_a", cmp.unmatched_a);
  list("unmatched_b", cmp.unmatched_b);
  list("unresolved_a", cmp.unresolved_a);
  list("unresolved_b", cmp.unresolved_b);
}

}  // namespace opdyn
