#include "ndm/checkpoint.hpp"
#include "ndm/errors.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace ndm {
namespace {

TEST(Checkpoint, NdmRoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  const NdmModel m = test::tiny_model(test::discrete_config(50), test::random_learnable(2, rng), rng);
  Checkpoint c = Checkpoint::from_model(m);
  c.normalization = Normalization{Eigen::RowVectorXd::Constant(2, 0.1), Eigen::RowVectorXd::Constant(2, 1.0 / 3)};
  c.dataset = "checkerboard-2d";
  c.loss_mode = "discrete";
  c.config_hash = "0123456789abcdef";
  c.step = 77;
  c.seed = 9;
  const Checkpoint r = checkpoint_from_json(checkpoint_to_json(c));
  const NdmModel m2 = r.ndm_model();
  EXPECT_EQ(m2.eps_params.values, m.eps_params.values);
  EXPECT_EQ(m2.transform.params().values, m.transform.params().values);
  EXPECT_EQ(m2.schedule.config(), m.schedule.config());
  EXPECT_EQ(r.normalization.scale, c.normalization.scale);
  EXPECT_EQ(r.step, 77);
  EXPECT_EQ(r.seed, 9u);
  EXPECT_EQ(r.config_hash, c.config_hash);
  const Mat z = test::random_mat(3, 2, rng);
  EXPECT_EQ(net_forward(m2.eps_spec, m2.eps_params, z, Vec::Constant(3, 0.5)),
            net_forward(m.eps_spec, m.eps_params, z, Vec::Constant(3, 0.5)));
}

TEST(Checkpoint, DotRoundTripThroughFile) {
  std::mt19937_64 rng(2);
  Checkpoint c;
  c.kind = Checkpoint::Kind::Dot;
  c.schedule = test::continuous_config();
  c.transform = Transform::fixed_diagonal(Vec::Constant(1, 1.7));
  c.dot_map = MonotoneMap::init(5, rng);
  c.normalization = Normalization::identity(1);
  const auto dir = std::filesystem::temp_directory_path() / "ndm_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "dot.json";
  save_checkpoint(c, path);
  const Checkpoint r = load_checkpoint(path);
  EXPECT_EQ(r.kind, Checkpoint::Kind::Dot);
  EXPECT_EQ(r.dot_map.params(), c.dot_map.params());
  EXPECT_EQ(r.dot_model().transform.kind(), TransformKind::FixedDiagonal);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MalformedInputRejected) {
  EXPECT_THROW(checkpoint_from_json("not json"), ContractError);
  EXPECT_THROW(checkpoint_from_json("{}"), ContractError);
  EXPECT_THROW(checkpoint_from_json(R"({"format":"ndm-checkpoint","version":99})"), ContractError);
  std::mt19937_64 rng(3);
  Checkpoint c = Checkpoint::from_model(test::tiny_model(test::continuous_config(), Transform::identity(2), rng));
  std::string text = checkpoint_to_json(c);
  text.replace(text.find("\"eps_net\""), 9, "\"eps_nett\"");
  EXPECT_THROW(checkpoint_from_json(text), ContractError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), ContractError);
}

TEST(Checkpoint, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

}  // namespace
}  // namespace ndm
