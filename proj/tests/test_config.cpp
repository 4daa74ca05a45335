#include <gtest/gtest.h>

#include <sstream>

#include "relprop/config.hpp"

using namespace relprop;

TEST(Config, ReadsKeysCommentsAndBlanks) {
  std::istringstream in(
      "# training\n"
      "k = 6\n"
      "lr_gene=0.2   # faster\n"
      "\n"
      "  epochs =  7\n"
      "calibrate_thresholds = false\n"
      "chem_normalizer = genes\n"
      "test_fraction = 0.25\n"
      "graph = some/graph.tsv\n");
  RunConfig c;
  read_config(in, c);
  EXPECT_EQ(c.train.dim, 6u);
  EXPECT_EQ(c.train.lr_gene, 0.2);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_FALSE(c.train.calibrate_thresholds);
  EXPECT_EQ(c.train.chem_normalizer, ChemNormalizer::ObservedGenes);
  EXPECT_EQ(c.test_fraction, 0.25);
  EXPECT_EQ(c.graph_path, "some/graph.tsv");
  EXPECT_EQ(c.train.lr_chem, 0.001);
}

TEST(Config, LaterLinesWin) {
  std::istringstream in("seed = 1\nseed = 9\n");
  RunConfig c;
  read_config(in, c);
  EXPECT_EQ(c.train.seed, 9u);
}

TEST(Config, ErrorsCarryLineNumbers) {
  for (const char* body : {"k = 4\nbogus = 1\n", "k = 4\nk four\n", "k = 4\nepochs = many\n",
                           "k = 4\nshuffle_cell_lines = maybe\n", "k = 4\nchem_normalizer = drugs\n"}) {
    std::istringstream in(body);
    RunConfig c;
    try {
      read_config(in, c, "cfg.txt");
      FAIL() << body;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
      EXPECT_EQ(e.file(), "cfg.txt");
      EXPECT_EQ(e.line(), 2u);
    }
  }
}

TEST(Config, WriteThenReadIsIdentity) {
  RunConfig c;
  c.train.dim = 3;
  c.train.lr_edge = 0.0123456789012345;
  c.train.beta = 0.3;
  c.train.seed = 1234567890123ULL;
  c.train.shuffle_cell_lines = true;
  c.train.threads = 4;
  c.khop = 1;
  c.l1_strength = 0.05;
  c.logreg_max_iters = 500;
  c.panel_path = "p.tsv";
  c.out_dir = "out";
  std::ostringstream os;
  write_config(os, c);
  std::istringstream in(os.str());
  RunConfig back;
  read_config(in, back);
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.khop, c.khop);
  EXPECT_EQ(back.l1_strength, c.l1_strength);
  EXPECT_EQ(back.logreg_max_iters, c.logreg_max_iters);
  EXPECT_EQ(back.panel_path, c.panel_path);
  EXPECT_EQ(back.out_dir, c.out_dir);
  EXPECT_TRUE(back.graph_path.empty());
}
