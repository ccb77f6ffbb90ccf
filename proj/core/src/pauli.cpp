#include "opdyn/pauli.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "opdyn/error.hpp"

namespace opdyn {
namespace {

std::uint64_t site_mask(int n_sites) {
  return n_sites >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n_sites) - 1;
}

void check_sites(int n_sites) {
  if (n_sites < 1 || n_sites > kMaxPauliSites) {
    throw ConfigError("Pauli string size must be in [1, 64], got " +
                      std::to_string(n_sites));
  }
}

void check_same_size(const PauliString& a, const PauliString& b) {
  if (a.n_sites() != b.n_sites()) {
    throw ConfigError("Pauli strings differ in size: " + a.label() + " vs " +
                      b.label());
  }
}

// Sites of the minimal contiguous window covering `support`, extended by
// `radius` on both sides.
std::uint64_t window_around(std::uint64_t support, int n_sites, int radius,
                            bool periodic) {
  const std::uint64_t all = site_mask(n_sites);
  if (support == 0) return 0;
  int start = 0;
  int length = 0;
  if (!periodic) {
    start = std::countr_zero(support);
    length = 64 - std::countl_zero(support) - start;
    int lo = std::max(0, start - radius);
    int hi = std::min(n_sites - 1, start + length - 1 + radius);
    std::uint64_t m = 0;
    for (int s = lo; s <= hi; ++s) m |= std::uint64_t{1} << s;
    return m;
  }
  // On a ring the covering arc is the complement of the longest empty gap.
  int best_gap = -1;
  int best_gap_end = 0;
  for (int s = 0; s < n_sites; ++s) {
    if (!((support >> s) & 1)) continue;
    int gap = 0;
    for (int k = 1; k < n_sites; ++k) {
      if ((support >> ((s + k) % n_sites)) & 1) break;
      ++gap;
    }
    if (gap > best_gap) {
      best_gap = gap;
      best_gap_end = s;
    }
  }
  // The arc starts right after the gap and ends at the site preceding it.
  start = (best_gap_end + best_gap + 1) % n_sites;
  length = n_sites - best_gap;
  if (length + 2 * radius >= n_sites) return all;
  std::uint64_t m = 0;
  for (int k = -radius; k < length + radius; ++k) {
    int s = ((start + k) % n_sites + n_sites) % n_sites;
    m |= std::uint64_t{1} << s;
  }
  return m;
}

}  // namespace

std::complex<double> Phase::value() const {
  switch (exponent & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

PauliString::PauliString(int n_sites) : n_sites_(n_sites) {
  check_sites(n_sites);
}

PauliString::PauliString(int n_sites, std::uint64_t x_mask,
                         std::uint64_t z_mask)
    : n_sites_(n_sites), x_(x_mask), z_(z_mask) {
  check_sites(n_sites);
  if (((x_mask | z_mask) & ~site_mask(n_sites)) != 0) {
    throw ConfigError("Pauli mask has bits beyond site " +
                      std::to_string(n_sites - 1));
  }
}

PauliString PauliString::from_label(std::string_view label) {
  if (label.empty() || label.size() > kMaxPauliSites) {
    throw ConfigError("malformed Pauli label '" + std::string(label) + "'");
  }
  std::uint64_t x = 0;
  std::uint64_t z = 0;
  for (std::size_t k = 0; k < label.size(); ++k) {
    const std::uint64_t bit = std::uint64_t{1} << k;
    switch (label[k]) {
      case 'I': case '_': break;
      case 'X': x |= bit; break;
      case 'Y': x |= bit; z |= bit; break;
      case 'Z': z |= bit; break;
      default:
        throw ConfigError("malformed Pauli label '" + std::string(label) +
                          "'");
    }
  }
  return PauliString(static_cast<int>(label.size()), x, z);
}

PauliString PauliString::single(int n_sites, int site, char letter) {
  if (site < 0 || site >= n_sites) {
    throw ConfigError("site " + std::to_string(site) + " out of range");
  }
  std::string label(static_cast<std::size_t>(n_sites), 'I');
  label[static_cast<std::size_t>(site)] = letter;
  return from_label(label);
}

char PauliString::letter(int site) const {
  const bool x = (x_ >> site) & 1;
  const bool z = (z_ >> site) & 1;
  if (x && z) return 'Y';
  if (x) return 'X';
  if (z) return 'Z';
  return 'I';
}

std::string PauliString::label() const {
  std::string s(static_cast<std::size_t>(n_sites_), 'I');
  for (int k = 0; k < n_sites_; ++k) s[static_cast<std::size_t>(k)] = letter(k);
  return s;
}

int PauliString::weight() const { return std::popcount(x_ | z_); }

PauliProduct pauli_product(const PauliString& a, const PauliString& b) {
  check_same_size(a, b);
  // With P = i^{|x&z|} X^x Z^z, moving Z^{z_a} past X^{x_b} costs
  // (-1)^{|z_a & x_b|}.
  const std::uint64_t x = a.x_mask() ^ b.x_mask();
  const std::uint64_t z = a.z_mask() ^ b.z_mask();
  int e = std::popcount(a.x_mask() & a.z_mask()) +
          std::popcount(b.x_mask() & b.z_mask()) +
          2 * std::popcount(a.z_mask() & b.x_mask()) -
          std::popcount(x & z);
  e = ((e % 4) + 4) % 4;
  return {Phase{static_cast<std::uint8_t>(e)}, PauliString(a.n_sites(), x, z)};
}

bool commutes(const PauliString& a, const PauliString& b) {
  check_same_size(a, b);
  const int overlap = std::popcount(a.x_mask() & b.z_mask()) +
                      std::popcount(a.z_mask() & b.x_mask());
  return overlap % 2 == 0;
}

PauliBasis::PauliBasis(std::vector<PauliString> elements) {
  std::vector<std::pair<std::string, PauliString>> keyed;
  keyed.reserve(elements.size());
  for (auto& p : elements) {
    if (n_sites_ == 0) n_sites_ = p.n_sites();
    if (p.n_sites() != n_sites_) {
      throw ConfigError("basis elements differ in size");
    }
    keyed.emplace_back(p.label(), p);
  }
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  keyed.erase(std::unique(keyed.begin(), keyed.end(),
                          [](const auto& l, const auto& r) {
                            return l.first == r.first;
                          }),
              keyed.end());
  elements_.reserve(keyed.size());
  labels_.reserve(keyed.size());
  for (auto& [label, p] : keyed) {
    lookup_.emplace(label, elements_.size());
    elements_.push_back(p);
    labels_.push_back(std::move(label));
  }
}

std::optional<std::size_t> PauliBasis::index_of(const PauliString& p) const {
  if (p.n_sites() != n_sites_) return std::nullopt;
  return index_of(p.label());
}

std::optional<std::size_t> PauliBasis::index_of(std::string_view label) const {
  auto it = lookup_.find(std::string(label));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

SymmetryOperator SymmetryOperator::bit_flip(int n_sites) {
  return {PauliString(n_sites, site_mask(n_sites), 0)};
}

std::optional<int> TruncationPolicy::suggested_radius(double total_time) const {
  if (!velocity) return std::nullopt;
  return static_cast<int>(std::ceil(*velocity * total_time));
}

PauliBasis enumerate_full_basis(int n_sites) {
  check_sites(n_sites);
  if (n_sites > 12) {
    throw ConfigError("full basis enumeration limited to 12 sites");
  }
  // Letters I,X,Y,Z sort in ASCII order, so base-4 counting with site 0 as the
  // most significant digit is already lexicographic.
  static constexpr std::uint64_t kX[4] = {0, 1, 1, 0};
  static constexpr std::uint64_t kZ[4] = {0, 0, 1, 1};
  const std::uint64_t count = std::uint64_t{1} << (2 * n_sites);
  std::vector<PauliString> out;
  out.reserve(count);
  for (std::uint64_t code = 0; code < count; ++code) {
    std::uint64_t x = 0;
    std::uint64_t z = 0;
    for (int site = 0; site < n_sites; ++site) {
      const auto digit = (code >> (2 * (n_sites - 1 - site))) & 3;
      x |= kX[digit] << site;
      z |= kZ[digit] << site;
    }
    out.emplace_back(n_sites, x, z);
  }
  return PauliBasis(std::move(out));
}

PauliBasis symmetry_filter(const PauliBasis& basis, const SymmetryOperator& s) {
  std::vector<PauliString> kept;
  for (const auto& p : basis.elements()) {
    if (commutes(p, s.generator)) kept.push_back(p);
  }
  return PauliBasis(std::move(kept));
}

PauliBasis truncated_basis(const TruncationPolicy& policy,
                           std::span<const PauliString> observable_terms) {
  if (observable_terms.empty()) {
    throw ConfigError("truncated_basis needs at least one observable term");
  }
  const int n = observable_terms.front().n_sites();
  for (const auto& term : observable_terms) {
    if (term.n_sites() != n) {
      throw ConfigError("observable terms differ in size");
    }
  }
  if (policy.window_radius < 0) {
    throw ConfigError("window radius must be nonnegative");
  }

  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  std::vector<PauliString> kept;
  auto add_window = [&](std::uint64_t window) {
    // Enumerate all sub-masks of the window for x and z independently.
    for (std::uint64_t x = window;; x = (x - 1) & window) {
      for (std::uint64_t z = window;; z = (z - 1) & window) {
        if ((x | z) != 0 && seen.emplace(x, z).second) {
          kept.emplace_back(n, x, z);
        }
        if (z == 0) break;
      }
      if (x == 0) break;
    }
  };

  if (policy.mode == TruncationMode::kFull) {
    add_window(site_mask(n));
  } else {
    std::set<std::uint64_t> windows;
    for (const auto& term : observable_terms) {
      if (term.is_identity()) continue;
      windows.insert(window_around(term.support_mask(), n,
                                   policy.window_radius, policy.periodic));
    }
    for (auto w : windows) add_window(w);
  }

  PauliBasis basis(std::move(kept));
  if (!policy.symmetry_filter) return basis;
  SymmetryOperator s = policy.symmetry_generator
                           ? SymmetryOperator{*policy.symmetry_generator}
                           : SymmetryOperator::bit_flip(n);
  return symmetry_filter(basis, s);
}

}  // namespace opdyn
