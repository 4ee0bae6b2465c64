#include <gtest/gtest.h>

#include "support.hpp"

using namespace seqflow;

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config(std::string("{}"));
  EXPECT_EQ(c.schema_version, 1);
  EXPECT_FALSE(c.seed.has_value());
  EXPECT_EQ(c.loss.lambda1, 50.0);
  EXPECT_EQ(c.loss.lambda2, 0.005);
  EXPECT_EQ(c.loss.lambda3, 0.3);
  EXPECT_EQ(c.loss.photometric, PhotometricKind::census);
  EXPECT_EQ(c.loss.fb_check.alpha1, 0.01);
  EXPECT_EQ(c.loss.fb_check.alpha2, 0.5);
  EXPECT_EQ(c.loss.confidence.delta, 0.01);
  EXPECT_EQ(c.doe.n_occluders, 3);
  EXPECT_EQ(c.synth.frames, 100);
}

TEST(Config, KittiPresetThenOverrides) {
  const RunConfig c = parse_config(std::string(R"({"loss": {"preset": "kitti", "lambda3": 0.5}})"));
  EXPECT_EQ(c.loss.lambda1, 75.0);
  EXPECT_EQ(c.loss.lambda2, 0.001);
  EXPECT_EQ(c.loss.lambda3, 0.5);
  EXPECT_EQ(c.loss.lambda4, 0.2);
  EXPECT_EQ(c.loss.smooth_order, 2);
}

TEST(Config, RoundTripReproducesDocument) {
  RunConfig c;
  c.seed = 1234567890123ull;
  c.loss.photometric = PhotometricKind::ssim;
  c.loss.doe_mode = DoeMode::sparse;
  c.loss.w_tsm = 0.7;
  c.loss.fb_check.alpha2 = 0.75;
  c.doe.initial_velocity = MotionState{1.5, -2};
  c.doe.affine = AffineWalkParams{};
  c.doe.affine->sigma_rotation = 0.02;
  c.sve.center_x = 10;
  c.sve.walk.initial.tx = 3;
  c.cve.sample.blurs = {BlurKind::psf, BlurKind::motion};
  c.cve.sample.mode = CveMode::jitter;
  c.synth.velocity_v = 1.25;
  c.synth.background = TextureKind::flat;
  const json j = to_json(c);
  const RunConfig back = parse_config(json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.doe.initial_velocity, c.doe.initial_velocity);
  EXPECT_EQ(back.cve.sample.blurs, c.cve.sample.blurs);
  EXPECT_EQ(to_json(parse_config(to_json(RunConfig{}))), to_json(RunConfig{}));
}

TEST(Config, RejectsUnknownKeysAtEveryLevel) {
  for (const char* doc : {R"({"bogus": 1})", R"({"loss": {"lambda9": 1}})", R"({"doe": {"affine": {"x": 1}}})",
                          R"({"sve": {"initial": {"spin": 1}}})", R"({"synth": {"colour": 1}})",
                          R"({"fb_check": {"alpha3": 1}})"})
    EXPECT_THROW(parse_config(std::string(doc)), ConfigError) << doc;
}

TEST(Config, RejectsBadValues) {
  for (const char* doc :
       {R"({"schema_version": 2})", R"({"loss": {"lambda1": "big"}})", R"({"loss": {"photometric": "l1"}})",
        R"({"loss": {"preset": "chairs"}})", R"({"loss": {"doe_mode": "dense"}})", R"({"cve": {"gamma": [1]}})",
        R"({"cve": {"blurs": ["sharpen"]}})", R"({"cve": {"mode": "wander"}})", R"({"synth": {"velocity": 4}})",
        R"({"synth": {"background": "plaid"}})", R"({"doe": {"initial_velocity": [1, 2, 3]}})", R"([1, 2])",
        R"({"loss": 3})", "{not json"})
    EXPECT_THROW(parse_config(std::string(doc)), ConfigError) << doc;
}

TEST(Config, BreakdownListsTermsAndTotal) {
  LossValue v;
  v.value = 1.5;
  v.terms = {{"photometric", 1.0}, {"smoothness", 0.01}};
  const json j = breakdown_json(v);
  EXPECT_EQ(j.size(), 3u);
  EXPECT_EQ(j["total"], 1.5);
  EXPECT_EQ(j["smoothness"], 0.01);
}
