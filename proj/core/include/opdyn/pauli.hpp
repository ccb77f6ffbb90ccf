#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace opdyn {

inline constexpr int kMaxPauliSites = 64;

// Power of i: exponent 0..3 stands for +1, +i, -1, -i.
struct Phase {
  std::uint8_t exponent = 0;

  std::complex<double> value() const;
  friend bool operator==(Phase, Phase) = default;
};

// Tensor product of {I,X,Y,Z} over n sites in symplectic form. Bit k of a
// mask refers to site k (site 0 is the leftmost letter of the label).
// Letter per site: I (x=0,z=0), X (1,0), Z (0,1), Y (1,1).
class PauliString {
 public:
  PauliString() = default;
  // Identity on n_sites.
  explicit PauliString(int n_sites);
  PauliString(int n_sites, std::uint64_t x_mask, std::uint64_t z_mask);

  // Parses "XIZ"-style labels; '_' is accepted as I.
  static PauliString from_label(std::string_view label);
  // Single-site operator letter at `site`, identity elsewhere.
  static PauliString single(int n_sites, int site, char letter);

  int n_sites() const { return n_sites_; }
  std::uint64_t x_mask() const { return x_; }
  std::uint64_t z_mask() const { return z_; }

  char letter(int site) const;
  std::string label() const;
  bool is_identity() const { return (x_ | z_) == 0; }
  std::uint64_t support_mask() const { return x_ | z_; }
  int weight() const;

  friend bool operator==(const PauliString&, const PauliString&) = default;

 private:
  int n_sites_ = 0;
  std::uint64_t x_ = 0;
  std::uint64_t z_ = 0;
};

struct PauliProduct {
  Phase phase;
  PauliString string;
};

// a * b = phase * string.
PauliProduct pauli_product(const PauliString& a, const PauliString& b);
bool commutes(const PauliString& a, const PauliString& b);

// Ordered, duplicate-free list of Pauli strings on a common number of sites.
class PauliBasis {
 public:
  PauliBasis() = default;
  // Sorts lexicographically by label and removes duplicates.
  explicit PauliBasis(std::vector<PauliString> elements);

  std::size_t size() const { return elements_.size(); }
  bool empty() const { return elements_.empty(); }
  int n_sites() const { return n_sites_; }
  const std::vector<PauliString>& elements() const { return elements_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const PauliString& operator[](std::size_t i) const { return elements_[i]; }

  std::optional<std::size_t> index_of(const PauliString& p) const;
  std::optional<std::size_t> index_of(std::string_view label) const;
  bool contains(const PauliString& p) const { return index_of(p).has_value(); }

 private:
  int n_sites_ = 0;
  std::vector<PauliString> elements_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct SymmetryOperator {
  PauliString generator;

  // Global bit flip, the product of X over all sites.
  static SymmetryOperator bit_flip(int n_sites);
};

enum class TruncationMode { kFull, kWindow };

struct TruncationPolicy {
  TruncationMode mode = TruncationMode::kFull;
  int window_radius = 0;
  // Only used by suggested_radius().
  std::optional<double> velocity;
  bool symmetry_filter = false;
  // Generator used when symmetry_filter is set; bit flip when unset.
  std::optional<PauliString> symmetry_generator;
  bool periodic = true;

  // ceil(v * T) when a velocity is configured.
  std::optional<int> suggested_radius(double total_time) const;
};

// All 4^n strings, identity first, lexicographic in label order.
PauliBasis enumerate_full_basis(int n_sites);

// Keeps exactly the strings that commute with the symmetry generator.
PauliBasis symmetry_filter(const PauliBasis& basis, const SymmetryOperator& s);

// Non-identity strings supported inside a contiguous window extending
// `window_radius` sites past the support of some observable term. Overlapping
// windows are deduplicated. Full mode keeps every non-identity string.
PauliBasis truncated_basis(const TruncationPolicy& policy,
                           std::span<const PauliString> observable_terms);

}  // namespace opdyn
