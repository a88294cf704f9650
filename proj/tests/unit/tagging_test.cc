/* Copyright 2026 The diffcodec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "diffcodec/tagging.h"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

namespace diffcodec {
namespace {

TEST(TagSetTest, SortsAndDeduplicates) {
  const TagSet t({100, 5, 4584, 5});
  EXPECT_EQ(t.ids(), (std::vector<int>{5, 100, 4584}));
  EXPECT_THROW(TagSet({-1}), OutOfRange);
}

TEST(TagCodecTest, ThreeIdsTakeThirtyNineBits) {
  const TagSet t({5, 100, 4584});
  const PackedBits p = encode_tag_ids(t);
  EXPECT_EQ(p.bit_count, 39u);
  EXPECT_EQ(p.bytes.size(), 5u);
  EXPECT_EQ(decode_tag_ids(p.bytes, 3), t);
}

TEST(TagCodecTest, LargestIdIsThirteenOnes) {
  const PackedBits p = encode_tag_ids(TagSet({8191}));
  ASSERT_EQ(p.bytes.size(), 2u);
  EXPECT_EQ(p.bytes[0], 0xFF);
  EXPECT_EQ(p.bytes[1], 0xF8);
  EXPECT_THROW(encode_tag_ids(TagSet({3, 8192})), OutOfRange);
}

TEST(TagCodecTest, BitCostIsThirteenPerTag) {
  Rng rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> ids(rng.uniform_int(0, 40));
    for (int& v : ids) v = rng.uniform_int(0, kMaxTags - 1);
    const TagSet t(ids);
    const PackedBits p = encode_tag_ids(t);
    EXPECT_EQ(p.bit_count, 13 * t.size());
    EXPECT_EQ(p.bytes.size(), (13 * t.size() + 7) / 8);
    EXPECT_EQ(decode_tag_ids(p.bytes, t.size()), t);
  }
  // An average of 8.7 tags per image costs 113.1 bits.
  EXPECT_NEAR(8.7 * kTagBits, 113.1, 1e-9);
}

TEST(TagDropoutTest, DegenerateProbabilities) {
  Rng rng(32);
  const TagSet t({1, 2, 3});
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(dropout_tags(t, 0.0, rng), t);
    EXPECT_TRUE(dropout_tags(t, 1.0, rng).empty());
  }
  EXPECT_THROW(dropout_tags(t, 1.5, rng), std::invalid_argument);
  EXPECT_THROW(dropout_tags(t, -0.1, rng), std::invalid_argument);
}

TEST(TagDropoutTest, RateAndAllOrNothing) {
  Rng rng(33);
  const TagSet t({7, 9, 11, 40});
  int dropped = 0;
  for (int i = 0; i < 10000; ++i) {
    const TagSet d = dropout_tags(t, 0.1, rng);
    if (d.empty()) {
      ++dropped;
    } else {
      EXPECT_EQ(d, t);
    }
  }
  EXPECT_GE(dropped / 1e4, 0.085);
  EXPECT_LE(dropped / 1e4, 0.115);
}

TEST(TagDictionaryTest, LoadsOneTagPerLine) {
  const std::string path = ::testing::TempDir() + "/tags.txt";
  {
    std::ofstream out(path);
    out << "red\ngreen\nblue\n\n";
  }
  const TagDictionary d = TagDictionary::load(path);
  EXPECT_EQ(d.size(), 3);
  EXPECT_EQ(d.id("blue"), 2);
  EXPECT_EQ(d.name(1), "green");
  EXPECT_THROW(d.id("mauve"), OutOfRange);
  EXPECT_THROW(TagDictionary({"a", "b", "a"}), std::invalid_argument);
  std::vector<std::string> many(kMaxTags + 1);
  for (size_t i = 0; i < many.size(); ++i) many[i] = "t" + std::to_string(i);
  EXPECT_THROW(TagDictionary{many}, OutOfRange);
  many.pop_back();
  EXPECT_EQ(TagDictionary{many}.size(), kMaxTags);
  std::remove(path.c_str());
}

TEST(TagConditionerTest, NullRowOrderInvarianceAndDeterminism) {
  Rng rng(34);
  TagConditioner cond(10, 6, rng);
  const Var a = cond.forward({TagSet({3, 1, 7}), TagSet({7, 3, 1}), TagSet()});
  for (int j = 0; j < 6; ++j) EXPECT_EQ(a.value()[j], a.value()[6 + j]);
  NamedParams params;
  cond.collect(params, "tags");
  const Tensor& table = params[0].second->value();
  for (int j = 0; j < 6; ++j) EXPECT_EQ(a.value()[12 + j], table[10 * 6 + j]);
  EXPECT_EQ(cond.forward({TagSet({3, 1, 7})}).value(), cond.forward({TagSet({1, 3, 7})}).value());
  EXPECT_THROW(cond.forward({TagSet({10})}), OutOfRange);
}

TEST(TagExtractorTest, OracleReturnsLabelsAndRegistryRejectsUnknown) {
  Rng rng(35);
  auto oracle = std::make_shared<LabelOracle>();
  const Tensor img = Tensor::uniform({1, 3, 8, 8}, rng, 0.0, 1.0);
  oracle->add(img, TagSet({4, 2}));
  EXPECT_EQ(oracle->extract(img)[0].ids(), (std::vector<int>{2, 4}));
  TagExtractorRegistry reg;
  reg.add("oracle", oracle);
  EXPECT_EQ(reg.get("oracle").extract(img)[0], TagSet({2, 4}));
  EXPECT_THROW(reg.get("ram"), UnregisteredExtractor);
}

TEST(TagExtractorTest, ClassifierLearnsASeparableTag) {
  Rng rng(36);
  TagClassifier clf(2, 8, rng);
  NamedParams params;
  clf.collect(params, "clf");
  Adam opt(param_handles(params), {.lr = 3e-3});
  // Tag 0: bright image, tag 1: red dominant.
  auto make = [&](int n, std::vector<TagSet>& labels) {
    Tensor x({n, 3, 8, 8});
    labels.clear();
    for (int i = 0; i < n; ++i) {
      const bool bright = rng.bernoulli(0.5), red = rng.bernoulli(0.5);
      for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 64; ++p) {
          double v = (bright ? 0.7 : 0.2) + rng.uniform(-0.1, 0.1);
          if (c == 0 && red) v += 0.25;
          x[(static_cast<size_t>(i) * 3 + c) * 64 + p] = v;
        }
      std::vector<int> ids;
      if (bright) ids.push_back(0);
      if (red) ids.push_back(1);
      labels.emplace_back(ids);
    }
    return x;
  };
  std::vector<TagSet> labels;
  for (int step = 0; step < 300; ++step) {
    const Tensor x = make(16, labels);
    backward(clf.loss(Var(x), labels));
    opt.step();
  }
  const Tensor test = make(64, labels);
  const auto pred = clf.extract(test);
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  EXPECT_GE(correct, 58);
}

}  // namespace
}  // namespace diffcodec
