#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "opdyn/checkpoint.hpp"
#include "opdyn/error.hpp"

using namespace opdyn;

namespace {

Checkpoint sample() {
  Checkpoint c;
  c.spec.variant = Variant::kFanTime;
  c.spec.state_dim = 3;
  c.spec.depth = 4;
  c.spec.hidden_width = 10;
  c.spec.partition = {2, 3, 5};
  c.spec.frequencies = {0.1, 1.0 / 3.0, 7.25};
  c.spec.trainable_frequencies = true;
  c.spec.append_time = true;
  c.params = init_parameters(c.spec, 123);
  c.params.values(0) = -0.0;
  c.params.values(1) = 5e-324;
  c.basis = PauliBasis({PauliString::from_label("XI"), PauliString::from_label("ZY"), PauliString::from_label("IZ")});
  c.history = {{0, 1.5, 2.5}, {1, 0.1 + 0.2, std::numeric_limits<double>::infinity()}};
  c.best_epoch = 1;
  c.best_validation = 0.3;
  c.seed = 0xdeadbeefcafeULL;
  c.meta.set("config.grid.dt", "0.1");
  c.meta.set("note", "spaces and = signs");
  return c;
}

std::string bytes(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, c);
  return out.str();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto c = sample();
  const auto raw = bytes(c);
  std::istringstream in(raw, std::ios::binary);
  const auto r = read_checkpoint(in);
  EXPECT_EQ(std::memcmp(r.params.values.data(), c.params.values.data(),
                        sizeof(double) * static_cast<std::size_t>(c.params.values.size())),
            0);
  EXPECT_TRUE(std::signbit(r.params.values(0)));
  EXPECT_EQ(r.spec.variant, c.spec.variant);
  EXPECT_EQ(r.spec.frequencies, c.spec.frequencies);
  EXPECT_EQ(r.spec.partition.n_cos, 3);
  EXPECT_TRUE(r.spec.trainable_frequencies);
  EXPECT_TRUE(r.spec.append_time);
  EXPECT_EQ(r.basis.labels(), c.basis.labels());
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_EQ(r.history[1].train_loss, 0.1 + 0.2);
  EXPECT_TRUE(std::isinf(r.history[1].validation_loss));
  EXPECT_EQ(r.best_epoch, 1);
  EXPECT_EQ(r.seed, c.seed);
  EXPECT_EQ(r.meta.get("note"), "spaces and = signs");
  ASSERT_EQ(r.params.layout.size(), c.params.layout.size());
  EXPECT_EQ(bytes(r), raw);
  // The restored parameters drive the same network.
  VectorField f(r.spec, r.params);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "opdyn_ckp_test.bin";
  const auto c = sample();
  write_checkpoint(path, c);
  EXPECT_EQ(read_checkpoint(path).params.values, c.params.values);
  std::filesystem::remove(path);
  EXPECT_THROW(read_checkpoint(path), Error);
}

TEST(Checkpoint, RejectsDamage) {
  const auto raw = bytes(sample());
  auto reject = [](const std::string& s) {
    std::istringstream in(s, std::ios::binary);
    EXPECT_THROW(read_checkpoint(in), FormatError);
  };
  reject("");
  reject("NOTACKPT" + raw.substr(8));
  auto bad_version = raw;
  bad_version[8] = 9;
  reject(bad_version);
  reject(raw.substr(0, raw.size() - 5));
  reject(raw.substr(0, raw.size() / 2));
  reject(raw + "x");
}
