#include <algorithm>
#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/manifest.hpp"
#include "rmtbvqa/patches.hpp"
#include "rmtbvqa/synth.hpp"
#include "rmtbvqa/video.hpp"
#include "unit/temp_dir.hpp"

using namespace rmtbvqa;

namespace {

RawVideo noise_video(std::size_t w, std::size_t h, std::size_t f, unsigned seed) {
  RawVideo v = RawVideo::blank(w, h, f, "s");
  std::mt19937 rng(seed);
  for (auto& p : v.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return v;
}

Patch small_patch(std::size_t size, std::size_t frames, unsigned seed) {
  Patch p;
  p.patch_id = "p";
  p.source_id = "s";
  p.enhancement_tag = "e";
  p.size = size;
  p.frames = frames;
  p.proxy_score = 41.5;
  p.pixels.resize(frames * 3 * size * size);
  std::mt19937 rng(seed);
  for (auto& x : p.pixels) x = static_cast<std::uint8_t>(rng() & 0xff);
  return p;
}

Patch full_patch(std::uint8_t fill) {
  Patch p;
  p.patch_id = "full";
  p.source_id = "s";
  p.enhancement_tag = "e";
  p.pixels.assign(kPatchFrames * 3 * kFullSize * kFullSize, fill);
  return p;
}

}  // namespace

TEST_CASE("video file round trip and validation") {
  TempDir dir;
  RawVideo v = noise_video(5, 3, 2, 1);
  write_video(dir / "a.rmtv", v);
  RawVideo back = read_video(dir / "a.rmtv", "s");
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.frame_count == 2);
  CHECK(back.pixels == v.pixels);

  std::filesystem::resize_file(dir / "a.rmtv", std::filesystem::file_size(dir / "a.rmtv") - 1);
  CHECK_THROWS_AS(read_video(dir / "a.rmtv"), FormatError);

  RawVideo bad = v;
  bad.pixels.pop_back();
  CHECK_THROWS_AS(bad.validate(), FormatError);
}

TEST_CASE("window counts follow the floor of each dimension over 256") {
  RawVideo v = RawVideo::blank(1280, 720, 72, "s");
  auto pairs = extract_patches_at(v, nullptr, {0, 0}, {"vid", "e", ""});
  CHECK(pairs.size() == 10);

  RawVideo one = RawVideo::blank(256, 256, 72, "s");
  CHECK(extract_patches_at(one, nullptr, {0, 0}, {"vid", "e", ""}).size() == 1);
  CHECK(extract_patches(one, nullptr, 7, {"vid", "e", ""}).size() == 1);

  RawVideo narrow = RawVideo::blank(255, 256, 72, "s");
  CHECK_THROWS_AS(extract_patches(narrow, nullptr, 7, {"vid", "e", ""}), InvalidArgument);
  RawVideo short_clip = RawVideo::blank(256, 256, 71, "s");
  CHECK_THROWS_AS(extract_patches(short_clip, nullptr, 7, {"vid", "e", ""}), InvalidArgument);

  RawVideo longer = RawVideo::blank(256, 256, 150, "s");
  auto strided = extract_patches_at(longer, nullptr, {0, 0}, {"vid", "e", ""});
  REQUIRE(strided.size() == 2);
  CHECK(strided[0].enhanced.t0 == 0);
  CHECK(strided[1].enhanced.t0 == 72);
}

TEST_CASE("windows never overlap and stay inside the video") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t W = 300 + seed * 37, H = 260 + seed * 23;
    RawVideo v = RawVideo::blank(W, H, 72, "src");
    auto pairs = extract_patches(v, nullptr, seed, {"vid", "e", ""});
    REQUIRE_FALSE(pairs.empty());
    const auto off = grid_offset(W, H, seed, "src");
    CHECK(off.x <= W % 256);
    CHECK(off.y <= H % 256);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& a = pairs[i].enhanced;
      CHECK(a.x0 + kFullSize <= W);
      CHECK(a.y0 + kFullSize <= H);
      CHECK(a.t0 + kPatchFrames <= 72);
      for (std::size_t j = i + 1; j < pairs.size(); ++j) {
        const auto& b = pairs[j].enhanced;
        const bool apart = a.x0 + kFullSize <= b.x0 || b.x0 + kFullSize <= a.x0 ||
                           a.y0 + kFullSize <= b.y0 || b.y0 + kFullSize <= a.y0;
        CHECK(apart);
      }
    }
  }
}

TEST_CASE("enhanced and reference patches are co-located and linked") {
  RawVideo ref = noise_video(300, 280, 72, 3);
  RawVideo enh = noise_video(300, 280, 72, 4);
  auto pairs = extract_patches(enh, &ref, 11, {"v1", "blur2", "v1ref"});
  REQUIRE(pairs.size() == 1);
  const Patch& e = pairs[0].enhanced;
  REQUIRE(pairs[0].reference.has_value());
  const Patch& r = *pairs[0].reference;
  CHECK(e.x0 == r.x0);
  CHECK(e.y0 == r.y0);
  CHECK(e.reference_link == r.patch_id);
  CHECK(r.enhancement_tag == ManifestRow::kReferenceTag);
  CHECK(e.at(5, 1, 10, 20) == enh.at(5, e.y0 + 10, e.x0 + 20, 1));
  CHECK(r.at(5, 1, 10, 20) == ref.at(5, r.y0 + 10, r.x0 + 20, 1));

  RawVideo other = noise_video(301, 280, 72, 5);
  CHECK_THROWS_AS(extract_patches(enh, &other, 11, {"v1", "blur2", "v1ref"}), InvalidArgument);
}

TEST_CASE("downsampling averages 2x2 blocks with round half up") {
  Patch flat = full_patch(77);
  Patch d = downsample_patch(flat);
  CHECK(d.size == kDownSize);
  CHECK(d.frames == 72);
  CHECK(d.resolution == Resolution::down);
  CHECK(d.reference_link == flat.patch_id);
  CHECK(std::all_of(d.pixels.begin(), d.pixels.end(), [](auto x) { return x == 77; }));

  Patch checker = full_patch(0);
  for (std::size_t t = 0; t < checker.frames; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < kFullSize; ++y)
        for (std::size_t x = 0; x < kFullSize; ++x) checker.at(t, c, y, x) = ((x + y) % 2) ? 255 : 0;
  Patch dc = downsample_patch(checker);
  CHECK(std::all_of(dc.pixels.begin(), dc.pixels.end(), [](auto x) { return x == 128; }));

  CHECK_THROWS_AS(downsample_patch(d), InvalidArgument);
}

TEST_CASE("rotation by quarter turns") {
  Patch p = small_patch(6, 3, 9);
  Patch r0 = augment_rotate(p, 0);
  CHECK(r0.pixels == p.pixels);

  Patch r = p;
  for (int i = 0; i < 4; ++i) r = augment_rotate(r, 1);
  CHECK(r.pixels == p.pixels);

  Patch dot = small_patch(6, 3, 0);
  std::fill(dot.pixels.begin(), dot.pixels.end(), 0);
  for (std::size_t t = 0; t < 3; ++t) dot.at(t, 0, 0, 0) = 255;
  Patch turned = augment_rotate(dot, 1);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(turned.at(t, 0, 5, 0) == 255);  // (x=0, y=H-1)
    CHECK(turned.at(t, 0, 0, 0) == 0);
  }

  for (int k = 1; k < 4; ++k) {
    Patch q = augment_rotate(p, k);
    CHECK(q.patch_id != p.patch_id);
    CHECK(q.source_id == p.source_id);
    CHECK(q.proxy_score == p.proxy_score);
    CHECK(q.reference_link == p.patch_id);
    auto a = p.pixels, b = q.pixels;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK(augment_rotate(p, 1).pixels == augment_rotate(augment_rotate(p, 3), 2).pixels);
}

TEST_CASE("patch file round trip") {
  TempDir dir;
  Patch p = small_patch(4, 2, 12);
  save_patch(dir / "p.rmtt", p);
  std::size_t size = 0, frames = 0;
  auto px = load_patch_pixels(dir / "p.rmtt", size, frames);
  CHECK(size == 4);
  CHECK(frames == 2);
  CHECK(px == p.pixels);
}

TEST_CASE("manifest round trips") {
  TempDir dir;
  Manifest empty;
  write_manifest(dir / "empty.csv", empty);
  Manifest e2 = read_manifest(dir / "empty.csv");
  CHECK(e2.rows.empty());
  CHECK_FALSE(e2.seed.has_value());

  Manifest m;
  m.seed = 42;
  m.rows.push_back({"a_ref", "src0", "reference", Resolution::full, "", std::nullopt, "", "patches/a_ref.rmtt"});
  m.rows.push_back({"a", "src0", "noise1", Resolution::full, "a_ref", 31.25, "psnr", "patches/a.rmtt"});
  m.rows.push_back({"a_down", "src0", "noise1", Resolution::down, "a", 31.25, "psnr", "patches/a, down.rmtt"});
  write_manifest(dir / "m.csv", m);
  Manifest back = read_manifest(dir / "m.csv");
  REQUIRE(back.rows.size() == 3);
  CHECK(back.seed == 42u);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.rows[i].patch_id == m.rows[i].patch_id);
    CHECK(back.rows[i].source_id == m.rows[i].source_id);
    CHECK(back.rows[i].enhancement_tag == m.rows[i].enhancement_tag);
    CHECK(back.rows[i].resolution == m.rows[i].resolution);
    CHECK(back.rows[i].reference_link == m.rows[i].reference_link);
    CHECK(back.rows[i].proxy_score == m.rows[i].proxy_score);
    CHECK(back.rows[i].metric == m.rows[i].metric);
    CHECK(back.rows[i].path == m.rows[i].path);
  }
  CHECK(validate_manifest(back, dir.path(), false).empty());
}

TEST_CASE("manifest parse errors") {
  TempDir dir;
  {
    std::ofstream f(dir / "short.csv");
    f << "patch_id,source_id,enhancement_tag,resolution_tag,reference_link,proxy_score,metric,path\n";
    f << "a,s,e,full,,1,psnr,a.rmtt\n";
    f << "b,s,e,full,,1,psnr\n";
  }
  try {
    read_manifest(dir / "short.csv");
    FAIL("expected a parse error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }

  Manifest dup;
  dup.rows.push_back({"a", "s", "e", Resolution::full, "", 1.0, "psnr", "a.rmtt"});
  dup.rows.push_back({"a", "s", "e", Resolution::full, "", 1.0, "psnr", "a.rmtt"});
  CHECK_THROWS(write_manifest(dir / "dup.csv", dup));
  {
    std::ofstream f(dir / "dup2.csv");
    f << "patch_id,source_id,enhancement_tag,resolution_tag,reference_link,proxy_score,metric,path\n";
    f << "a,s,e,full,,1,psnr,a.rmtt\n";
    f << "a,s,e,full,,1,psnr,a.rmtt\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "dup2.csv"), FormatError);
}

TEST_CASE("manifest validation finds broken links and missing files") {
  TempDir dir;
  Manifest m;
  m.rows.push_back({"a", "s", "e", Resolution::full, "", 1.0, "psnr", "a.rmtt"});
  m.rows.push_back({"a_down", "s", "other", Resolution::down, "a", 1.0, "psnr", "a_down.rmtt"});
  m.rows.push_back({"b_down", "s", "e", Resolution::down, "missing", 1.0, "psnr", "b_down.rmtt"});
  CHECK(validate_manifest(m, dir.path(), false).size() == 2);
  CHECK(validate_manifest(m, dir.path(), true).size() == 5);
}

TEST_CASE("extracted corpus links every down patch to a matching full patch") {
  SynthConfig cfg;
  cfg.sources = 1;
  cfg.levels = {2};
  RawVideo ref = synth_reference(0, cfg);
  RawVideo enh = degrade(ref, Degradation::noise, 2, 5);
  Manifest m;
  for (const auto& pair : extract_patches(enh, &ref, 3, {"src0_noise2", "noise2", "src0_ref"})) {
    m.rows.push_back(row_for(*pair.reference, "r.rmtt"));
    m.rows.push_back(row_for(pair.enhanced, "e.rmtt"));
    m.rows.push_back(row_for(downsample_patch(pair.enhanced), "d.rmtt"));
  }
  CHECK(validate_manifest(m, {}, false).empty());
  const auto idx = m.index();
  for (const auto& r : m.rows) {
    if (r.resolution != Resolution::down) continue;
    const auto& full = m.rows[idx.at(r.reference_link)];
    CHECK(full.resolution == Resolution::full);
    CHECK(full.source_id == r.source_id);
    CHECK(full.enhancement_tag == r.enhancement_tag);
  }
}

TEST_CASE("synthetic corpus") {
  SynthConfig cfg;
  cfg.width = 64;
  cfg.height = 48;
  cfg.frames = 4;
  RawVideo a = synth_reference(1, cfg);
  CHECK(a.pixels == synth_reference(1, cfg).pixels);
  CHECK(a.pixels != synth_reference(2, cfg).pixels);
  for (auto kind : {Degradation::noise, Degradation::blur, Degradation::contrast, Degradation::jitter}) {
    CHECK(degrade(a, kind, 0, 1).pixels == a.pixels);
    CHECK(degrade(a, kind, 2, 1).pixels == degrade(a, kind, 2, 1).pixels);
    CHECK(degrade(a, kind, 2, 1).pixels != a.pixels);
    CHECK(degradation_from_string(to_string(kind)) == kind);
  }
  CHECK(synth_mos(0) == 100.0);
  CHECK(synth_mos(3) == 40.0);
  CHECK(subset_tag(Degradation::contrast) == "A");
  CHECK(subset_tag(Degradation::jitter) == "B");
  CHECK(subset_tag(Degradation::blur) == "C");

  TempDir dir;
  cfg.sources = 2;
  cfg.levels = {1, 3};
  write_synth_corpus(dir.path(), cfg);
  auto videos = read_video_list(dir / "videos.csv");
  auto labels = read_labels(dir / "labels.csv");
  CHECK(videos.size() == 2 * 3);
  CHECK(labels.size() == 2 * 2);
  for (const auto& v : videos) CHECK(std::filesystem::exists(dir / v.path));
  std::map<std::string, double> mos;
  for (const auto& l : labels) mos[l.video_id] = l.mos;
  CHECK(mos.at("src0_noise1") == 80.0);
  CHECK(mos.at("src1_noise3") == 40.0);
}
