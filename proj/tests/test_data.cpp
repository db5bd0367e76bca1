#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "doctest.h"
#include "sdgp/errors.hpp"
#include "sdgp/data.hpp"

using namespace sdgp;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("sdgp_data_" + std::to_string(::getpid()) + "_" + name);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Three 2x3 images with pixel values i*10 + k and labels 0, 2, 1.
struct IdxFixture {
  fs::path images = temp_path("img.idx"), labels = temp_path("lbl.idx");
  std::vector<std::uint8_t> img, lbl;
  IdxFixture() {
    put_be32(img, 0x00000803);
    put_be32(img, 3);
    put_be32(img, 2);
    put_be32(img, 3);
    for (std::uint8_t i = 0; i < 3; ++i)
      for (std::uint8_t k = 0; k < 6; ++k) img.push_back(static_cast<std::uint8_t>(i * 10 + k));
    put_be32(lbl, 0x00000801);
    put_be32(lbl, 3);
    lbl.insert(lbl.end(), {0, 2, 1});
    write_bytes(images, img);
    write_bytes(labels, lbl);
  }
  ~IdxFixture() {
    fs::remove(images);
    fs::remove(labels);
  }
};

}  // namespace

TEST_CASE("IDX files decode bit-exactly") {
  IdxFixture f;
  const Dataset d = load_idx(f.images, f.labels, Normalization::UnitRange);
  CHECK(d.images.shape() == Shape{3, 2, 3, 1});
  CHECK(d.labels == std::vector<std::uint8_t>{0, 2, 1});
  CHECK(d.num_classes == 3);
  CHECK(d.images.at({1, 1, 2, 0}) == 15.0f / 255.0f);
  CHECK(d.sample_shape() == Shape{2, 3, 1});
}

TEST_CASE("IDX standardization centers each channel") {
  IdxFixture f;
  const Dataset d = load_idx(f.images, f.labels, Normalization::Standardize);
  double sum = 0.0, sq = 0.0;
  for (float v : d.images.values()) {
    sum += v;
    sq += v * v;
  }
  CHECK(sum / d.images.size() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(sq / d.images.size() == doctest::Approx(1.0).epsilon(1e-4));
  REQUIRE(d.channel_mean.size() == 1);
}

TEST_CASE("malformed IDX files report the offending offset") {
  IdxFixture f;
  auto truncated = f.img;
  truncated.resize(truncated.size() - 4);
  write_bytes(f.images, truncated);
  try {
    load_idx(f.images, f.labels);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == truncated.size());
  }

  auto bad_magic = f.img;
  bad_magic[3] = 0x01;
  write_bytes(f.images, bad_magic);
  CHECK_THROWS_AS(load_idx(f.images, f.labels), FormatError);

  write_bytes(f.images, {});
  try {
    load_idx(f.images, f.labels);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  write_bytes(f.images, f.img);
  auto fewer = f.lbl;
  fewer[7] = 2;
  fewer.pop_back();
  write_bytes(f.labels, fewer);
  CHECK_THROWS_AS(load_idx(f.images, f.labels), InputError);

  CHECK_THROWS_AS(load_idx(temp_path("missing"), f.labels), InputError);
}

TEST_CASE("CIFAR-10 records are reordered to channels-last") {
  std::vector<std::uint8_t> rec(3073 * 2);
  rec[0] = 7;
  for (std::size_t c = 0; c < 3; ++c) rec[1 + c * 1024 + 5] = static_cast<std::uint8_t>(100 + c);
  rec[3073] = 2;
  const fs::path p = temp_path("cifar.bin");
  write_bytes(p, rec);
  const Dataset d = load_cifar10_binary({p}, Normalization::UnitRange);
  CHECK(d.images.shape() == Shape{2, 32, 32, 3});
  CHECK(d.labels == std::vector<std::uint8_t>{7, 2});
  CHECK(d.num_classes == 10);
  for (std::size_t c = 0; c < 3; ++c) CHECK(d.images.at({0, 0, 5, c}) == (100.0f + c) / 255.0f);

  rec.pop_back();
  write_bytes(p, rec);
  CHECK_THROWS_AS(load_cifar10_binary({p}), FormatError);
  write_bytes(p, {});
  CHECK_THROWS_AS(load_cifar10_binary({p}), FormatError);
  fs::remove(p);
}

TEST_CASE("synthetic data is deterministic in its seed") {
  SynthOptions o;
  o.samples = 50;
  o.classes = 3;
  o.height = o.width = 8;
  o.seed = 4;
  const Dataset a = synth_dataset(o), b = synth_dataset(o);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  o.seed = 5;
  CHECK_FALSE(synth_dataset(o).images == a.images);
  CHECK(a.num_classes == 3);
  for (auto l : a.labels) CHECK(l < 3);
  o.classes = 0;
  CHECK_THROWS_AS(synth_dataset(o), ConfigError);
}

TEST_CASE("batches gather the requested samples") {
  SynthOptions o;
  o.samples = 10;
  o.height = o.width = 4;
  const Dataset d = synth_dataset(o);
  Tensor batch;
  std::vector<std::uint8_t> labels;
  const std::vector<std::size_t> idx{3, 7};
  gather_batch(d, idx, batch, labels);
  CHECK(batch.shape() == Shape{2, 4, 4, 1});
  CHECK(labels == std::vector<std::uint8_t>{d.labels[3], d.labels[7]});
  CHECK(batch[16] == d.images[7 * 16]);
}

TEST_CASE("validation catches inconsistent datasets") {
  Dataset d;
  d.images = Tensor({2, 2, 2, 1});
  d.labels = {0};
  d.num_classes = 2;
  CHECK_THROWS_AS(d.validate(), InputError);
  d.labels = {0, 5};
  CHECK_THROWS_AS(d.validate(), InputError);
}
