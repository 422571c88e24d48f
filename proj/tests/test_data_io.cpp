#include <doctest.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "support.hpp"
#include "talesumm/checkpoint.hpp"
#include "talesumm/error.hpp"
#include "talesumm/json_io.hpp"
#include "talesumm/manifest.hpp"
#include "talesumm/splits.hpp"
#include "talesumm/synth.hpp"
#include "talesumm/tensor_file.hpp"

using namespace talesumm;
using namespace talesumm::io;
using talesumm::testing::EpisodeShape;
using talesumm::testing::random_episode;
using talesumm::testing::random_matrix;
using talesumm::testing::TempDir;
namespace fs = std::filesystem;

namespace {

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.dims() == b.dims() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

std::map<std::string, std::vector<std::uint8_t>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file_bytes(e.path());
  return out;
}

std::vector<std::uint8_t> header(std::uint32_t version, std::uint8_t dtype, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> b{'T', 'S', 'T', 'N'};
  for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(version >> (8 * i)));
  b.push_back(dtype);
  b.push_back(std::uint8_t(dims.size()));
  for (auto d : dims)
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(d >> (8 * i)));
  return b;
}

std::optional<std::uint64_t> parse_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_tensor(bytes);
  } catch (const ParseError& e) {
    return e.offset();
  }
  return std::nullopt;
}

model::TaleSummConfig small_config() {
  model::TaleSummConfig c;
  c.d_model = 56;
  c.heads = 8;
  c.episode_layers = 2;
  c.shot_dims = {5, 4, 3};
  c.utterance_dim = 6;
  c.max_groups = 8;
  c.max_duration_s = 64;
  c.frame_cap = 4;
  return c;
}

}  // namespace

TEST_CASE("tensor container round trip") {
  Rng rng(1);
  SUBCASE("3x2 matrix, exact byte layout") {
    const Tensor<float> t(Dims{3, 2}, {1.0f, -2.5f, 0.0f, 3.25f, 1e-30f, -0.0f});
    const auto bytes = encode_tensor(t);
    CHECK(bytes.size() == 4 + 4 + 1 + 1 + 2 * 4 + 6 * 4);
    CHECK(bytes == [&] {
      auto h = header(1, 1, {3, 2});
      for (float v : t.data()) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        for (int i = 0; i < 4; ++i) h.push_back(std::uint8_t(u >> (8 * i)));
      }
      return h;
    }());
    CHECK(same_bits(decode_tensor(bytes), t));
  }
  SUBCASE("special values and many shapes") {
    for (int trial = 0; trial < 50; ++trial) {
      Dims dims;
      const std::size_t rank = rng.uniform_int(0, 4);
      for (std::size_t r = 0; r < rank; ++r) dims.push_back(rng.uniform_int(0, 5));
      Tensor<float> t(dims);
      for (auto& v : t.data()) v = float(rng.normal() * 1e3);
      if (t.size() > 2) {
        t[0] = std::numeric_limits<float>::quiet_NaN();
        t[1] = -std::numeric_limits<float>::infinity();
        t[2] = std::numeric_limits<float>::denorm_min();
      }
      CHECK(same_bits(decode_tensor(encode_tensor(t)), t));
    }
  }
  SUBCASE("files") {
    TempDir dir("tensor");
    const auto t = random_matrix<float>(rng, 4, 7);
    write_tensor(dir / "a/b/t.tstn", t);
    CHECK(same_bits(read_tensor(dir / "a/b/t.tstn"), t));
    CHECK_THROWS_AS(read_tensor(dir / "missing.tstn"), Error);
  }
}

TEST_CASE("tensor container rejects malformed input") {
  auto good = header(1, 1, {2, 2});
  good.resize(good.size() + 16, 0);

  auto bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK(parse_offset(bad_magic) == 0u);

  auto version = good;
  version[4] = 2;
  CHECK(parse_offset(version) == 4u);

  auto dtype = good;
  dtype[8] = 7;
  CHECK(parse_offset(dtype) == 8u);

  auto short_payload = header(1, 1, {2, 2});
  short_payload.resize(short_payload.size() + 12, 0);
  try {
    decode_tensor(short_payload);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("16") != std::string::npos);
    CHECK(std::string(e.what()).find("12") != std::string::npos);
  }

  auto long_payload = good;
  long_payload.push_back(0);
  CHECK_THROWS_AS(decode_tensor(long_payload), ParseError);
  CHECK(parse_offset({'T', 'S'}).has_value());
  CHECK_THROWS_AS(decode_tensor(std::vector<std::uint8_t>(good.begin(), good.begin() + 12)), ParseError);
  auto overflow = header(1, 1, {0xffffffffu, 0xffffffffu, 0xffffffffu});
  CHECK_THROWS_AS(decode_tensor(overflow), ParseError);
}

TEST_CASE("episode manifests") {
  TempDir dir("manifest");
  Rng rng(3);
  EpisodeShape shape;
  shape.shots = 1;
  shape.utterances = 1;
  auto ep = random_episode(rng, shape, "mini");
  ep.shots[0].validity.assign(ep.shots[0].frame_count(), 1);

  SUBCASE("minimal manifest round trip") {
    write_manifest(dir.path(), "episode.json", ep, "tensors", "labels.json");
    const auto loaded = load_manifest(dir / "episode.json");
    CHECK(loaded.episode.shots.size() == 1);
    CHECK(loaded.episode.utterances.size() == 1);
    CHECK(loaded.episode.episode_id == "mini");
    CHECK(same_bits(loaded.episode.shots[0].frames[2], ep.shots[0].frames[2]));
    CHECK(same_bits(loaded.episode.utterances[0].tokens, ep.utterances[0].tokens));
    CHECK(loaded.episode.shots[0].validity == ep.shots[0].validity);
    REQUIRE(loaded.labels);
    CHECK(*loaded.labels == dir / "labels.json");
    const auto meta = load_manifest(dir / "episode.json", ManifestLoad::kMetadataOnly);
    CHECK(meta.episode.shots[0].frame_count() == 0);
    CHECK(meta.episode.shots[0].span.end_s == ep.shots[0].span.end_s);
  }
  SUBCASE("declared width disagrees with the file") {
    ep.shot_dims[0] = 32;
    auto doc_ep = ep;
    doc_ep.shot_dims[0] = 5;
    write_manifest(dir.path(), "episode.json", doc_ep);
    auto doc = read_json(dir / "episode.json");
    doc["backbone_dims"][0] = 32;
    write_json(dir / "episode.json", doc);
    try {
      load_manifest(dir / "episode.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kInvalidInput);
      CHECK(std::string(e.what()).find("32") != std::string::npos);
    }
  }
  SUBCASE("unordered shot spans name both shots") {
    EpisodeShape two;
    two.shots = 2;
    two.utterances = 2;
    auto e2 = random_episode(rng, two, "two");
    write_manifest(dir.path(), "episode.json", e2);
    auto doc = read_json(dir / "episode.json");
    std::swap(doc["shots"][0]["start_s"], doc["shots"][1]["start_s"]);
    std::swap(doc["shots"][0]["end_s"], doc["shots"][1]["end_s"]);
    write_json(dir / "episode.json", doc);
    try {
      load_manifest(dir / "episode.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string what = e.what();
      CHECK(what.find("s0") != std::string::npos);
      CHECK(what.find("s1") != std::string::npos);
    }
  }
  SUBCASE("missing feature file") {
    write_manifest(dir.path(), "episode.json", ep);
    fs::remove(dir / "tensors/mini.u0.tstn");
    try {
      load_manifest(dir / "episode.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kIo);
    }
  }
  SUBCASE("malformed documents") {
    write_manifest(dir.path(), "episode.json", ep);
    auto doc = read_json(dir / "episode.json");
    doc["schema"] = "talesumm.episode/9";
    write_json(dir / "bad_schema.json", doc);
    CHECK_THROWS_AS(load_manifest(dir / "bad_schema.json"), ParseError);
    doc = read_json(dir / "episode.json");
    doc["shots"][0]["valid_frames"][0] = 3;
    write_json(dir / "bad_valid.json", doc);
    CHECK_THROWS_AS(load_manifest(dir / "bad_valid.json"), ParseError);
    std::ofstream(dir / "broken.json") << "{\"schema\": ";
    try {
      load_manifest(dir / "broken.json");
      FAIL("expected an error");
    } catch (const ParseError& e) {
      CHECK(e.offset().has_value());
    }
  }
  SUBCASE("episode lists") {
    write_episode_list(dir / "list.json", {{"a/episode.json", fs::path("a/labels.json")}, {"b/episode.json", {}}});
    const auto entries = load_episode_list(dir / "list.json");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].manifest == dir / "a/episode.json");
    CHECK(entries[0].labels == dir / "a/labels.json");
    CHECK_FALSE(entries[1].labels);
  }
}

TEST_CASE("label, score and config documents") {
  Rng rng(5);
  EpisodeShape shape;
  const auto ep = random_episode(rng, shape, "lab");
  LabelSet labels;
  labels.shot_scores = {0.0, 0.25, 1.0, 0.5};
  labels.dialog_scores = {0.1, 0.2, 0.3};
  labels.provenance = "annotator-3";
  labels.binarize_threshold = 0.4;
  TempDir dir("docs");

  const auto doc = make_label_document(ep, labels);
  write_json(dir / "labels.json", to_json(doc));
  const auto back = read_labels(dir / "labels.json");
  const auto set = back.label_set();
  CHECK(set.shot_scores == labels.shot_scores);
  CHECK(set.dialog_scores == labels.dialog_scores);
  CHECK(set.provenance == "annotator-3");
  CHECK(set.binarize_threshold == 0.4);
  CHECK(back.items.shot_ids == std::vector<std::string>{"s0", "s1", "s2", "s3"});

  const auto aligned = align_by_id({"s3", "s1", "s0", "s2"}, back.items.shot_ids, back.items.shots, "x");
  CHECK(aligned == std::vector<double>{0.5, 0.25, 0.0, 1.0});
  CHECK_THROWS_AS(align_by_id({"s0", "s9"}, {"s0", "s1"}, {0.0, 1.0}, "x"), Error);
  CHECK_THROWS_AS(align_by_id({"s0"}, {"s0", "s1"}, {0.0, 1.0}, "x"), Error);

  model::EpisodeScores scores{{0.1, 0.2, 0.3, 0.4}, {0.5, 0.6, 0.7}};
  const auto sv = make_score_values(ep, scores);
  write_json(dir / "scores.json", scores_to_json(sv));
  const auto sback = read_scores(dir / "scores.json");
  CHECK(sback.shots == scores.shots);
  CHECK(sback.utterances == scores.dialogs);
  CHECK(sback.episode_id == "lab");

  auto bad = to_json(doc);
  bad["shots"]["s1"] = 1.5;
  write_json(dir / "bad.json", bad);
  CHECK_THROWS_AS(read_labels(dir / "bad.json").label_set().validate(4, 3), Error);

  const auto cfg = small_config();
  CHECK(config_from_json(to_json(cfg)) == cfg);
  CHECK(config_from_json(Json::object()) == model::TaleSummConfig{});
  auto unknown = to_json(cfg);
  unknown["dmodel"] = 3;
  try {
    config_from_json(unknown);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  auto invalid = to_json(cfg);
  invalid["heads"] = 5;
  CHECK_THROWS_AS(config_from_json(invalid), Error);
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  cfg.seed = 17;
  cfg.num_episodes = 2;
  cfg.shots = 30;
  cfg.utterances = 12;
  cfg.noise_sigma = 0.0;

  SUBCASE("exact copies at zero noise") {
    const auto eps = synth_generate(cfg);
    REQUIRE(eps.size() == 2);
    for (const auto& s : eps) {
      CHECK(s.episode.shots.size() == 30);
      CHECK(s.episode.utterances.size() == 12);
      CHECK_NOTHROW(s.episode.validate());
      CHECK_NOTHROW(s.recap.validate());
      CHECK(s.segments.size() == cfg.planted_segments);
      std::size_t planted = 0;
      for (const auto& seg : s.segments) {
        CHECK(seg.size() == cfg.planted_width);
        for (auto i : seg) CHECK(s.planted.shot_scores[i] == 1.0);
        planted += seg.size();
      }
      CHECK(std::count(s.planted.shot_scores.begin(), s.planted.shot_scores.end(), 1.0) == std::ptrdiff_t(planted));
      CHECK(s.recap.shots.size() == planted + cfg.recap_distractors);
      for (std::size_t r = 0; r < planted; ++r) {
        const auto& frames = s.recap.shots[r].frames[0];
        for (std::size_t f = 0; f < frames.rows(); ++f) {
          bool found = false;
          for (const auto& shot : s.episode.shots)
            for (std::size_t g = 0; g < shot.frame_count() && !found; ++g)
              found = std::equal(frames.row(f).begin(), frames.row(f).end(), shot.frames[0].row(g).begin());
          CHECK(found);
        }
      }
      const auto matches = labeling::match_recap(s.recap.frame_bank(0), s.episode.frame_bank(0), labeling::MatchConfig{});
      const auto binary = labeling::binary_labels_from_matches(matches, 30);
      for (std::size_t i = 0; i < 30; ++i)
        if (s.planted.shot_scores[i] == 1.0) CHECK(binary[i] == 1);
    }
  }
  SUBCASE("pure function of the config, byte-identical trees") {
    TempDir a("synth_a"), b("synth_b");
    write_synth(a.path(), cfg, synth_generate(cfg));
    write_synth(b.path(), cfg, synth_generate(cfg));
    const auto ta = tree_bytes(a.path()), tb = tree_bytes(b.path());
    CHECK(ta.size() > 10);
    CHECK(ta == tb);
    CHECK(ta.count("catalog.json") == 1);
    CHECK(ta.count("ep000/episode.json") == 1);
    const auto loaded = load_manifest(a / "ep000/episode.json");
    REQUIRE(loaded.labels);
    CHECK(read_labels(*loaded.labels).label_set().shot_scores == synth_generate(cfg)[0].planted.shot_scores);
    cfg.seed = 18;
    CHECK(synth_generate(cfg)[0].episode.shots[0].frames[0].data()[0] !=
          synth_generate(SynthConfig{cfg})[0].episode.shots[0].frames[0].data()[0] + 1.0f);
  }
  SUBCASE("config validation and JSON") {
    CHECK(to_json(synth_config_from_json(to_json(cfg))) == to_json(cfg));
    auto bad = cfg;
    bad.planted_width = 31;
    CHECK_THROWS_AS(synth_generate(bad), Error);
    bad = cfg;
    bad.planted_segments = 7;
    bad.planted_width = 5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.noise_sigma = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    auto doc = to_json(cfg);
    doc["shotz"] = 3;
    CHECK_THROWS_AS(synth_config_from_json(doc), Error);
  }
}

TEST_CASE("checkpoints") {
  TempDir dir("ckpt");
  const auto cfg = small_config();
  model::TaleSumm<float> m(cfg, 42);
  auto opt = optim::make_adamw_state(m.parameters());
  opt.step = 7;
  Rng rng(9);
  for (auto& t : opt.first_moment)
    for (auto& v : t.data()) v = float(rng.normal());
  CheckpointMeta meta;
  meta.seed = 42;
  meta.epoch = 3;
  meta.extra = {{"note", "x"}};
  save_checkpoint(dir.path(), m.parameters(), cfg, meta, &opt);

  SUBCASE("bit-identical round trip") {
    const auto ck = load_checkpoint(dir.path(), cfg);
    CHECK(ck.config == cfg);
    CHECK(ck.meta.seed == 42);
    CHECK(ck.meta.epoch == 3);
    CHECK(ck.meta.extra == meta.extra);
    const auto& params = m.parameters().all();
    REQUIRE(ck.parameters.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      CHECK(ck.parameters[i].first == params[i].name);
      CHECK(same_bits(ck.parameters[i].second, params[i].value()));
      CHECK(bool(ck.trainable[i]) == params[i].trainable);
    }
    REQUIRE(ck.optimizer);
    CHECK(ck.optimizer->step == 7);
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(same_bits(ck.optimizer->first_moment[i], opt.first_moment[i]));

    const auto restored = load_model(dir.path());
    Rng er(2);
    EpisodeShape shape;
    const auto ep = random_episode(er, shape);
    CHECK(restored.predict(ep).shots == m.predict(ep).shots);
  }
  SUBCASE("config mismatch") {
    auto want = cfg;
    want.heads = 7;
    try {
      load_checkpoint(dir.path(), want);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kConfig);
      CHECK(std::string(e.what()).find("heads") != std::string::npos);
    }
  }
  SUBCASE("truncated tensor") {
    const auto file = dir / "params/0.tstn";
    REQUIRE(fs::exists(file));
    auto bytes = read_file_bytes(file);
    bytes.resize(bytes.size() - 3);
    write_file_bytes(file, bytes);
    CHECK_THROWS_AS(load_checkpoint(dir.path()), ParseError);
    CHECK_THROWS_AS(load_model(dir.path()), ParseError);
  }
  SUBCASE("format version") {
    auto index = read_json(dir / "index.json");
    index["format_version"] = 2;
    write_json(dir / "index.json", index);
    try {
      load_checkpoint(dir.path());
      FAIL("expected an error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("unsupported checkpoint format version") != std::string::npos);
    }
  }
  SUBCASE("duplicate names and missing index") {
    auto index = read_json(dir / "index.json");
    index["parameters"][1]["name"] = index["parameters"][0]["name"];
    write_json(dir / "index.json", index);
    CHECK_THROWS_AS(load_checkpoint(dir.path()), ParseError);
    CHECK_THROWS_AS(load_checkpoint(dir / "nowhere"), Error);
  }
  SUBCASE("restore into a mismatched store") {
    const auto ck = load_checkpoint(dir.path());
    auto other = cfg;
    other.episode_layers = 1;
    model::TaleSumm<float> smaller(other, 0);
    const auto before = smaller.parameters().all()[0].value();
    CHECK_THROWS_AS(restore_parameters(smaller.parameters(), ck), Error);
    CHECK(same_bits(smaller.parameters().all()[0].value(), before));
  }
}

TEST_CASE("splits") {
  std::vector<std::string> catalog;
  for (int i = 0; i < 10; ++i) catalog.push_back("e" + std::to_string(i));
  SplitSpec spec;
  spec.style = SplitStyle::kIntra;
  spec.splits["fold0"] = {{"e0", "e1", "e2", "e3", "e4", "e5"}, {"e6", "e7"}, {"e8", "e9"}};
  spec.splits["fold1"] = {{"e0", "e1"}, {}, {"e2"}};

  const auto resolved = make_splits(spec, catalog);
  REQUIRE(resolved.size() == 2);
  CHECK(resolved[0].name == "fold0");
  CHECK(resolved[0].parts.train.size() == 6);
  CHECK(resolved[0].parts.val.size() == 2);
  CHECK(resolved[0].parts.test.size() == 2);
  CHECK_FALSE(resolved[0].empty_val);
  CHECK(resolved[1].empty_val);

  const auto round = split_spec_from_json(to_json(spec));
  CHECK(round.style == SplitStyle::kIntra);
  CHECK(round.splits.at("fold0").val == spec.splits.at("fold0").val);
  for (auto s : {SplitStyle::kIntra, SplitStyle::kCrossSeason, SplitStyle::kCrossSeries, SplitStyle::kCustom})
    CHECK(split_style_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(split_style_from_string("random"), Error);

  auto overlap = spec;
  overlap.splits["fold0"].test.push_back("e0");
  try {
    make_splits(overlap, catalog);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("e0") != std::string::npos);
  }
  auto unknown = spec;
  unknown.splits["fold1"].train.push_back("e42");
  CHECK_THROWS_AS(make_splits(unknown, catalog), Error);
  auto empty_train = spec;
  empty_train.splits["fold1"].train.clear();
  CHECK_THROWS_AS(make_splits(empty_train, catalog), Error);
  auto doc = to_json(spec);
  doc["splits"]["fold0"]["holdout"] = Json::array();
  CHECK_THROWS_AS(split_spec_from_json(doc), ParseError);
}
