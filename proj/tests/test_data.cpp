#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "latentpath/augment.hpp"
#include "latentpath/color.hpp"
#include "latentpath/data.hpp"
#include "latentpath/image.hpp"
#include "latentpath/synthetic.hpp"

using namespace latentpath;

namespace {

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

PatchSet tiny_labeled_pool(std::size_t n, std::uint64_t seed) {
  SynthConfig config;
  config.patch_size = 16;
  config.train_count = n;
  config.test_count = 0;
  config.with_ihc = true;
  auto [train, test] = generate_synthetic(config, seed);
  return train;
}

}  // namespace

TEST_CASE("rgb/hsv conversion") {
  SECTION("pure red") {
    const Hsv hsv = rgb_to_hsv({1.0, 0.0, 0.0});
    CHECK(hsv.h == 0.0);
    CHECK(hsv.s == 1.0);
    CHECK(hsv.v == 1.0);
  }
  SECTION("gray is achromatic with hue 0") {
    const Hsv hsv = rgb_to_hsv({0.5, 0.5, 0.5});
    CHECK(hsv.h == 0.0);
    CHECK(hsv.s == 0.0);
    CHECK(hsv.v == 0.5);
  }
  SECTION("random pixels round-trip") {
    Rng rng(1234);
    for (int i = 0; i < 500; ++i) {
      const Rgb px{rng.next_double(), rng.next_double(), rng.next_double()};
      const Rgb back = hsv_to_rgb(rgb_to_hsv(px));
      CHECK(back.r == Catch::Approx(px.r).margin(1e-9));
      CHECK(back.g == Catch::Approx(px.g).margin(1e-9));
      CHECK(back.b == Catch::Approx(px.b).margin(1e-9));
    }
  }
}

TEST_CASE("ppm round-trip is bit-exact") {
  const auto dir = temp_dir("lp_ppm_test");
  Rng rng(9);
  ImageU8 img;
  img.width = 7;
  img.height = 5;
  img.channels = 3;
  img.pixels.resize(7 * 5 * 3);
  for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.next_index(256));
  write_ppm(dir / "t.ppm", img);
  const ImageU8 back = read_ppm(dir / "t.ppm");
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);

  // tensor conversion round-trips at 8-bit granularity
  const Tensor t = image_to_tensor(img);
  const ImageU8 again = tensor_to_image(t);
  CHECK(again.pixels == img.pixels);
  std::filesystem::remove_all(dir);
}

TEST_CASE("pgm handles comments and rejects wide maxval") {
  const auto dir = temp_dir("lp_pgm_test");
  {
    std::ofstream out(dir / "c.pgm", std::ios::binary);
    out << "P5\n# a comment\n2 2\n255\n";
    out.write("\x01\x02\x03\x04", 4);
  }
  const ImageU8 img = read_pgm(dir / "c.pgm");
  CHECK(img.width == 2);
  CHECK(img.at(1, 1, 0) == 4);
  {
    std::ofstream out(dir / "wide.pgm", std::ios::binary);
    out << "P5\n2 2\n65535\n";
    out.write("\0\1\0\2\0\3\0\4", 8);
  }
  CHECK_THROWS_AS(read_pgm(dir / "wide.pgm"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("center pixel label") {
  SECTION("uniform mask") {
    std::vector<std::uint8_t> mask(9, 2);
    CHECK(center_pixel_label(mask, 3) == Label::Tumour);
  }
  SECTION("2x2 floor convention picks (1,1)") {
    const std::vector<std::uint8_t> mask = {0, 1, 2, 0};
    CHECK(center_pixel_label(mask, 2) == Label::Stroma);
  }
  SECTION("S=256 reads pixel (128,128)") {
    std::vector<std::uint8_t> mask(256 * 256, 0);
    mask[128 * 256 + 128] = 1;
    CHECK(center_pixel_label(mask, 256) == Label::BenignEpithelium);
  }
  SECTION("invalid class index") {
    std::vector<std::uint8_t> mask(9, 7);
    CHECK_THROWS_AS(center_pixel_label(mask, 3), InputError);
  }
}

TEST_CASE("manifest load") {
  const auto dir = temp_dir("lp_manifest_test");
  SECTION("header-only file gives an empty set") {
    std::ofstream(dir / "m.csv") << manifest_header << "\n";
    CHECK(load_manifest(dir / "m.csv").size() == 0);
  }
  SECTION("labels parse case-insensitively, missing ihc allowed") {
    ImageU8 img;
    img.width = img.height = 4;
    img.channels = 3;
    img.pixels.assign(48, 100);
    write_ppm(dir / "a.ppm", img);
    std::ofstream(dir / "m.csv") << manifest_header << "\na.ppm,,TUMOUR,s1\na.ppm,,benign,s2\n";
    const PatchSet set = load_manifest(dir / "m.csv");
    REQUIRE(set.size() == 2);
    CHECK(set.records[0].label == Label::Tumour);
    CHECK(set.records[1].label == Label::BenignEpithelium);
    CHECK_FALSE(set.records[0].has_ihc());
    CHECK(set.records[0].source_id == "s1");
  }
  SECTION("unknown label names the row") {
    ImageU8 img;
    img.width = img.height = 2;
    img.channels = 3;
    img.pixels.assign(12, 0);
    write_ppm(dir / "a.ppm", img);
    std::ofstream(dir / "m.csv") << manifest_header << "\na.ppm,,epithelium,s1\n";
    CHECK_THROWS_WITH(load_manifest(dir / "m.csv"),
                      Catch::Matchers::ContainsSubstring("row 2"));
  }
  SECTION("mismatched pair dimensions fail at the row") {
    ImageU8 small, big;
    small.width = small.height = 2;
    small.channels = 3;
    small.pixels.assign(12, 0);
    big.width = big.height = 4;
    big.channels = 3;
    big.pixels.assign(48, 0);
    write_ppm(dir / "he.ppm", small);
    write_ppm(dir / "ihc.ppm", big);
    std::ofstream(dir / "m.csv") << manifest_header << "\nhe.ppm,ihc.ppm,stroma,s1\n";
    CHECK_THROWS_AS(load_manifest(dir / "m.csv"), IoError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset directory round-trip") {
  const auto dir = temp_dir("lp_dataset_test");
  PatchSet pool = tiny_labeled_pool(6, 31);
  save_dataset(dir, pool);
  const PatchSet back = load_manifest(dir / "manifest.csv");
  REQUIRE(back.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(back.records[i].label == pool.records[i].label);
    CHECK(back.records[i].has_ihc());
    // saved pixels are 8-bit; the reloaded tensor must match that quantization
    const ImageU8 quantized = tensor_to_image(pool.records[i].he_image);
    const Tensor expect = image_to_tensor(quantized);
    for (std::size_t j = 0; j < expect.numel(); ++j) {
      CHECK(back.records[i].he_image.data()[j] == expect.data()[j]);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("sample_random") {
  PatchSet pool = tiny_labeled_pool(20, 5);
  SECTION("n equal to source size is a permutation, labels dropped") {
    const PatchSet sample = sample_random(pool, 20, 99);
    CHECK(sample.size() == 20);
    CHECK(sample.role == SetRole::RandomUnlabeled);
    for (const auto& rec : sample.records) CHECK_FALSE(rec.label.has_value());
    std::vector<std::string> got, want;
    for (const auto& r : sample.records) got.push_back(r.source_id);
    for (const auto& r : pool.records) want.push_back(r.source_id);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
  }
  SECTION("same seed twice gives the identical selection") {
    const PatchSet a = sample_random(pool, 7, 123);
    const PatchSet b = sample_random(pool, 7, 123);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(a.records[i].source_id == b.records[i].source_id);
      CHECK(a.records[i].he_image.data()[0] == b.records[i].he_image.data()[0]);
    }
  }
  SECTION("oversampling is an input error") {
    CHECK_THROWS_AS(sample_random(pool, 21, 1), InputError);
  }
}

TEST_CASE("balanced counts follow largest remainder with class-index ties") {
  CHECK(balanced_counts(4, default_class_ratios) == std::array<std::size_t, 3>{1, 1, 2});
  CHECK(balanced_counts(1000, default_class_ratios) == std::array<std::size_t, 3>{250, 250, 500});
  CHECK(balanced_counts(10, default_class_ratios) == std::array<std::size_t, 3>{3, 2, 5});
  CHECK(balanced_counts(30, default_class_ratios) == std::array<std::size_t, 3>{8, 7, 15});
}

TEST_CASE("sample_balanced") {
  PatchSet pool = tiny_labeled_pool(300, 17);
  SECTION("counts match ratios within one per class and sum exactly") {
    Rng rng(404);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 4 + rng.next_index(60);
      const PatchSet sample = sample_balanced(pool, n, default_class_ratios, rng.next_u64());
      REQUIRE(sample.size() == n);
      std::array<std::size_t, 3> counts{};
      for (const auto& rec : sample.records) counts[static_cast<std::size_t>(*rec.label)]++;
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(static_cast<double>(counts[c]) -
                       static_cast<double>(n) * default_class_ratios[c]) < 1.0);
      }
    }
  }
  SECTION("insufficient class members names the class") {
    PatchSet small;
    small.role = SetRole::SourcePool;
    for (int i = 0; i < 10; ++i) {
      PatchRecord rec;
      rec.he_image = Tensor::zeros({3, 4, 4});
      rec.label = Label::Stroma;  // only stroma available
      small.records.push_back(rec);
    }
    CHECK_THROWS_WITH(sample_balanced(small, 8, default_class_ratios, 1),
                      Catch::Matchers::ContainsSubstring("benign"));
  }
  SECTION("unlabeled source rejected") {
    PatchSet unlabeled = sample_random(pool, 10, 3);
    CHECK_THROWS_AS(sample_balanced(unlabeled, 4, default_class_ratios, 1), InputError);
  }
}

TEST_CASE("augment") {
  PatchSet pool = tiny_labeled_pool(3, 77);
  const PatchRecord& rec = pool.records[0];
  SECTION("identity params change nothing") {
    const PatchRecord out = augment(rec, AugmentParams::identity());
    for (std::size_t i = 0; i < rec.he_image.numel(); ++i) {
      CHECK(out.he_image.data()[i] == rec.he_image.data()[i]);
      CHECK(out.ihc_image.data()[i] == rec.ihc_image.data()[i]);
    }
    CHECK(out.label == rec.label);
  }
  SECTION("horizontal flip is an involution") {
    AugmentParams p;
    p.flip_h = true;
    const PatchRecord once = augment(rec, p);
    const PatchRecord twice = augment(once, p);
    for (std::size_t i = 0; i < rec.he_image.numel(); ++i) {
      CHECK(twice.he_image.data()[i] == rec.he_image.data()[i]);
    }
  }
  SECTION("hue shift of a full turn returns the original") {
    AugmentParams p;
    p.hue_shift = 360.0;
    const PatchRecord out = augment(rec, p);
    for (std::size_t i = 0; i < rec.he_image.numel(); ++i) {
      CHECK(out.he_image.data()[i] == Catch::Approx(rec.he_image.data()[i]).margin(1e-9));
    }
  }
  SECTION("pair stays registered under flips") {
    AugmentParams p;
    p.flip_h = true;
    p.flip_v = true;
    const std::size_t s = rec.patch_size();
    PatchRecord marked = rec;
    marked.he_image = rec.he_image.detach();
    marked.ihc_image = rec.ihc_image.detach();
    marked.he_image.data()[2 * s + 3] = 0.123;   // (y=2, x=3) in channel 0
    marked.ihc_image.data()[2 * s + 3] = 0.123;
    const PatchRecord out = augment(marked, p);
    const std::size_t fy = s - 1 - 2, fx = s - 1 - 3;
    CHECK(out.he_image.data()[fy * s + fx] == 0.123);
    CHECK(out.ihc_image.data()[fy * s + fx] == 0.123);
  }
  SECTION("values stay in [0,1], shape and label unchanged") {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
      const AugmentParams p = sample_augment_params(AugmentRanges{}, rng.next_u64());
      const PatchRecord out = augment(rec, p);
      CHECK(out.he_image.shape() == rec.he_image.shape());
      CHECK(out.label == rec.label);
      for (double v : out.he_image.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("synthetic generator") {
  SynthConfig config;
  config.patch_size = 32;
  config.train_count = 40;
  config.test_count = 10;
  SECTION("same seed gives bit-identical datasets") {
    auto [train_a, test_a] = generate_synthetic(config, 2025);
    auto [train_b, test_b] = generate_synthetic(config, 2025);
    REQUIRE(train_a.size() == train_b.size());
    for (std::size_t i = 0; i < train_a.size(); ++i) {
      const auto& ra = train_a.records[i];
      const auto& rb = train_b.records[i];
      CHECK(ra.label == rb.label);
      CHECK(ra.mask == rb.mask);
      CHECK(std::equal(ra.he_image.data(), ra.he_image.data() + ra.he_image.numel(),
                       rb.he_image.data()));
    }
  }
  SECTION("center pixel of the mask agrees with the stored label") {
    auto [train, test] = generate_synthetic(config, 7);
    for (const auto& rec : train.records) {
      REQUIRE(rec.has_mask());
      CHECK(center_pixel_label(rec.mask, config.patch_size) == *rec.label);
    }
  }
  SECTION("all three classes occur and values are in range") {
    config.train_count = 120;
    auto [train, test] = generate_synthetic(config, 13);
    std::array<int, 3> counts{};
    for (const auto& rec : train.records) {
      counts[static_cast<std::size_t>(*rec.label)]++;
      for (double v : rec.he_image.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
    CHECK(counts[0] > 0);
    CHECK(counts[1] > 0);
    CHECK(counts[2] > 0);
  }
  SECTION("half-tumour region mask splits at the midline") {
    const SyntheticRegion region = generate_half_tumour_region(config, 64, 32, 3);
    CHECK(region.mask[16 * 64 + 10] == 2);
    CHECK(region.mask[16 * 64 + 50] == 0);
  }
}
