#include <gtest/gtest.h>

#include "boxprior/errors.hpp"
#include "boxprior/fusion/config.hpp"
#include "boxprior/fusion/model.hpp"
#include "boxprior/fusion/training.hpp"

namespace fus = boxprior::fusion;

TEST(TrainConfig, ParsesKeysAndComments) {
  const auto c = fus::parse_train_config(
      "# toy\nseed = 11\nepochs=20\nbatch_size = 4\nlearning_rate = 0.05\n\nlambda = 0.2\n"
      "L = 2\nD_l = 8, 12\nD = 24\nheads = 3\nclasses = 5\nepsilon_cosine = 1e-6\n");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.epochs, 20);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.05);
  EXPECT_DOUBLE_EQ(c.lambda, 0.2);
  EXPECT_EQ(c.model.layers, 2u);
  EXPECT_EQ(c.model.layer_widths, (std::vector<std::size_t>{8, 12}));
  EXPECT_EQ(c.model.hidden, 24u);
  EXPECT_EQ(c.model.heads, 3u);
  EXPECT_EQ(c.model.classes, 5u);
  EXPECT_DOUBLE_EQ(c.model.epsilon_cosine, 1e-6);
}

TEST(TrainConfig, SingleWidthRepeats) {
  const auto c = fus::parse_train_config("L = 4\nD_l = 10\n");
  EXPECT_EQ(c.model.layer_widths, std::vector<std::size_t>(4, 10));
}

TEST(TrainConfig, Errors) {
  EXPECT_THROW(fus::parse_train_config("learning_rat = 0.1\n"), boxprior::ParseError);
  EXPECT_THROW(fus::parse_train_config("seed = seven\n"), boxprior::ParseError);
  EXPECT_THROW(fus::parse_train_config("seed 7\n"), boxprior::ParseError);
  EXPECT_THROW(fus::parse_train_config("D = 30\nheads = 4\n"), boxprior::InvalidArgument);
  EXPECT_THROW(fus::parse_train_config("L = 3\nD_l = 8, 8\n"), boxprior::InvalidArgument);
  try {
    fus::parse_train_config("seed = 1\nbogus = 2\n", "my.cfg");
    FAIL() << "expected ParseError";
  } catch (const boxprior::ParseError& e) {
    EXPECT_EQ(e.file(), "my.cfg");
    EXPECT_EQ(e.offset(), 9u);
  }
}

TEST(TrainConfig, FormatRoundTrips) {
  fus::TrainConfig c;
  c.seed = 99;
  c.learning_rate = 0.1 + 0.2;
  c.model.layer_widths = {16, 8, 4};
  EXPECT_EQ(fus::parse_train_config(fus::format_train_config(c)), c);
}

TEST(ModelFile, RoundTripIsExact) {
  fus::TrainConfig c;
  c.seed = 5;
  const auto params = fus::init_model(c.model, 5);
  const std::string text = fus::format_model(c, params);
  const auto loaded = fus::parse_model(text);
  EXPECT_EQ(loaded.config, c);
  EXPECT_EQ(fus::format_model(loaded.config, loaded.params), text);
  EXPECT_NO_THROW(fus::validate(loaded.params, c.model));
}

TEST(ModelFile, RejectsForeignText) {
  EXPECT_THROW(fus::parse_model("hello\n"), boxprior::ParseError);
}

TEST(ModelConfig, ValidatesShape) {
  fus::ModelConfig m;
  EXPECT_NO_THROW(m.validate());
  m.heads = 3;
  EXPECT_THROW(m.validate(), boxprior::InvalidArgument);
  const auto params = fus::init_model(fus::ModelConfig{}, 1);
  fus::ModelConfig wider;
  wider.hidden = 64;
  EXPECT_THROW(fus::validate(params, wider), boxprior::ShapeError);
}
