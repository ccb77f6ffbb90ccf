#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opdyn/exact_sim.hpp"
#include "opdyn/trajectory.hpp"

namespace opdyn {

enum class Window { kRectangular, kHann };

std::string to_string(Window w);
Window parse_window(const std::string& s);

// C(t_j) = sum_i c_i(t_j) <Omega| sigma_i O |Omega>. Every basis label must be
// a valid string on the system's lattice.
ComplexSeries assemble_two_point(const Trajectory& pred, const TfimSystem& sys, const Observable& o);

// A(omega_k) = dt sum_j w_j C(t_j) exp(+i omega_k t_j) on the grid
// omega_k = 2 pi k / T, T = M dt, k ascending from -floor(M/2).
struct Spectrum {
  std::vector<double> omega;
  std::vector<std::complex<double>> amplitude;
  Window window = Window::kRectangular;
  double dt = 0.0;
  double span = 0.0;
  double resolution = 0.0;
  Metadata meta;

  std::size_t size() const { return omega.size(); }
  double magnitude(std::size_t k) const { return std::abs(amplitude[k]); }
  // Ordinary frequency omega / 2 pi.
  double frequency(std::size_t k) const;
};

// Throws ConfigError for non-uniform or too-short grids.
Spectrum fft_spectrum(std::span<const double> times, const ComplexSeries& series,
                      Window window = Window::kRectangular);

struct Peak {
  double omega = 0.0;
  double magnitude = 0.0;
  // Half width at half maximum, in angular units.
  double half_width = 0.0;

  double frequency() const;
};

struct PeakList {
  // Ascending in omega.
  std::vector<Peak> peaks;
  // Lowest peak above one resolution bin.
  std::optional<double> gap_estimate;
  double threshold_fraction = 0.05;
};

inline constexpr double kDefaultPeakThreshold = 0.05;

// Local maxima (neighbours wrap around) above threshold_fraction times the
// global maximum. Positions are refined from the three samples around each
// maximum: the complex-ratio estimator for the rectangular window, a
// parabola through the magnitudes for Hann.
PeakList find_peaks(const Spectrum& spec, double threshold_fraction = kDefaultPeakThreshold);

struct PeakMatch {
  double omega_a = 0.0;
  double omega_b = 0.0;
  double delta = 0.0;
};

struct SpectrumComparison {
  double tolerance = 0.0;
  double resolution_a = 0.0;
  double resolution_b = 0.0;
  std::vector<PeakMatch> matched;
  std::vector<double> unmatched_a;
  std::vector<double> unmatched_b;
  // Unmatched peaks of one spectrum lying within the other's resolution of
  // one of its peaks: merged there rather than absent.
  std::vector<double> unresolved_a;
  std::vector<double> unresolved_b;

  bool all_matched() const { return unmatched_a.empty() && unmatched_b.empty(); }
};

// Greedy nearest-pair matching with a tolerance of one bin of the coarser
// spectrum.
SpectrumComparison compare_peaks(const PeakList& a, double resolution_a, const PeakList& b,
                                 double resolution_b);
SpectrumComparison compare_spectra(const Spectrum& a, const Spectrum& b,
                                   double threshold_fraction = kDefaultPeakThreshold);

// True when the bin width exceeds `max_resolution`.
bool is_low_resolution(const Spectrum& spec, double max_resolution);

inline constexpr const char* kSpectrumHeader = "opdyn-spec v1";
inline constexpr const char* kPeaksHeader = "opdyn-peaks v1";

// Header, key=value metadata, column line "omega f magnitude re im", rows.
void write_spectrum(std::ostream& out, const Spectrum& spec);
void write_spectrum(const std::filesystem::path& path, const Spectrum& spec);
Spectrum read_spectrum(std::istream& in);
Spectrum read_spectrum(const std::filesystem::path& path);

// Key=value report.
void write_peaks(std::ostream& out, const PeakList& peaks, const Spectrum& spec, bool low_resolution);
void write_comparison(std::ostream& out, const SpectrumComparison& cmp);

}  // namespace opdyn
