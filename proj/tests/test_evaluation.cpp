// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "pclip/error.hpp"
#include "pclip/evaluation.hpp"
#include "metric_oracles.hpp"
#include "support.hpp"

using namespace pclip;
using pclip::test::Gen;

namespace {

GroundTruth one_image(std::vector<GroundTruthBox> boxes, const std::string& id = "a") {
  GroundTruth gt;
  gt.images[id] = std::move(boxes);
  return gt;
}

std::string coco_location(const std::string& text) {
  try {
    parse_coco_ground_truth(nlohmann::json::parse(text));
  } catch (const FormatError& e) {
    return e.location();
  }
  return "none";
}

std::string jsonl_location(const std::string& text) {
  try {
    parse_jsonl_ground_truth(text);
  } catch (const FormatError& e) {
    return e.location();
  }
  return "none";
}

}  // namespace

TEST(Recall, StrictThreshold) {
  // IoU of the proposal with the box is exactly 0.5.
  const auto gt = one_image({{{0, 0, 10, 10}, "x"}});
  const RankedProposals props{{"a", {{0, 0, 10, 5}}}};
  EXPECT_EQ(iou(props.at("a")[0], gt.images.at("a")[0].box), 0.5);
  EXPECT_EQ(recall_at(props, gt, 0.5, 10), 0.0);
  EXPECT_EQ(recall_at(props, gt, 0.49, 10), 1.0);
}

TEST(Recall, BudgetAndMissingImages) {
  GroundTruth gt = one_image({{{0, 0, 10, 10}, "x"}, {{20, 20, 30, 30}, "x"}});
  gt.images["b"] = {{{0, 0, 5, 5}, "y"}};
  const RankedProposals props{{"a", {{40, 40, 50, 50}, {0, 0, 10, 10}, {20, 20, 30, 30}}}};
  EXPECT_EQ(recall_at(props, gt, 0.5, 1), 0.0);
  EXPECT_DOUBLE_EQ(recall_at(props, gt, 0.5, 2), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(recall_at(props, gt, 0.5, 3), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(recall_at(props, gt, 0.5, 100), 2.0 / 3.0);
}

TEST(Recall, NoGroundTruthThrows) {
  GroundTruth gt;
  gt.images["a"] = {};
  EXPECT_THROW(recall_at({}, gt, 0.5, 1), InvalidInput);
  EXPECT_THROW(average_recall({}, gt, 1), InvalidInput);
}

TEST(AverageRecall, ThresholdsAndValue) {
  const auto t = average_recall_thresholds();
  EXPECT_EQ(t.front(), 0.5);
  EXPECT_EQ(t[1], 0.55);
  EXPECT_EQ(t.back(), 0.95);
  // IoU 0.8 clears the thresholds 0.5 to 0.75: six of ten.
  const auto gt = one_image({{{0, 0, 10, 10}, "x"}});
  const RankedProposals props{{"a", {{0, 0, 10, 8}}}};
  EXPECT_DOUBLE_EQ(average_recall(props, gt, 1), 0.6);
}

TEST(AveragePrecision, Examples) {
  EXPECT_DOUBLE_EQ(average_precision({true, true}, 2), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({false, true}, 1), 0.5);
  // Precision 1 at recall 1/2, then interpolated 2/3 at recall 1.
  EXPECT_DOUBLE_EQ(average_precision({true, false, true}, 2), 0.5 + 0.5 * 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(average_precision({}, 3), 0.0);
  EXPECT_DOUBLE_EQ(average_precision({true}, 4), 0.25);
  EXPECT_THROW(average_precision({true}, 0), InvalidInput);
}

TEST(DetectAndAp, DuplicatesAreFalsePositivesAfterNms) {
  const auto gt = one_image({{{0, 0, 10, 10}, "cat"}});
  // The second detection is disjoint from the first so NMS keeps both; the
  // first matches, the second is a false positive.
  const DetectionsByImage dets{{"a", {{{0, 0, 10, 10}, 0.9, "cat"}, {{20, 20, 30, 30}, 0.95, "cat"}}}};
  const auto r = detect_and_ap(dets, gt, {"cat"});
  ASSERT_EQ(r.per_class.size(), 1u);
  EXPECT_DOUBLE_EQ(r.per_class[0].ap, 0.5);
  EXPECT_EQ(r.per_class[0].detections, 2u);
  EXPECT_DOUBLE_EQ(r.mean_ap, 0.5);

  // An overlapping lower-scored duplicate is removed by NMS.
  const DetectionsByImage dup{{"a", {{{0, 0, 10, 10}, 0.9, "cat"}, {{0, 0, 10, 9}, 0.8, "cat"}}}};
  const auto d = detect_and_ap(dup, gt, {"cat"});
  EXPECT_EQ(d.per_class[0].detections, 1u);
  EXPECT_DOUBLE_EQ(d.per_class[0].ap, 1.0);
}

TEST(DetectAndAp, ClassMustMatch) {
  const auto gt = one_image({{{0, 0, 10, 10}, "cat"}});
  const DetectionsByImage dets{{"a", {{{0, 0, 10, 10}, 0.9, "dog"}}}};
  const auto r = detect_and_ap(dets, gt, {"cat", "dog"});
  ASSERT_EQ(r.per_class.size(), 1u);
  EXPECT_EQ(r.per_class[0].category, "cat");
  EXPECT_EQ(r.per_class[0].ap, 0.0);
}

TEST(DetectAndAp, OutOfVocabularyClassesAreFlagged) {
  const auto gt = one_image({{{0, 0, 10, 10}, "cat"}, {{20, 20, 30, 30}, "zebra"}});
  const DetectionsByImage dets{{"a", {{{0, 0, 10, 10}, 0.9, "cat"}}}};
  const auto r = detect_and_ap(dets, gt, {"cat"});
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_TRUE(r.per_class[0].in_vocabulary);
  EXPECT_EQ(r.per_class[1].category, "zebra");
  EXPECT_FALSE(r.per_class[1].in_vocabulary);
  EXPECT_EQ(r.per_class[1].ap, 0.0);
  EXPECT_DOUBLE_EQ(r.mean_ap, 0.5);
}

TEST(DetectAndAp, EachGroundTruthMatchesOnce) {
  const auto gt = one_image({{{0, 0, 10, 10}, "cat"}, {{0, 0, 10, 8}, "cat"}});
  // NMS at 0.9 keeps both; the best detection takes the box it overlaps most,
  // the second takes what is left.
  const DetectionsByImage dets{{"a", {{{0, 0, 10, 10}, 0.9, "cat"}, {{0, 0, 10, 8}, 0.8, "cat"}}}};
  const auto r = detect_and_ap(dets, gt, {"cat"}, 0.9);
  EXPECT_DOUBLE_EQ(r.per_class[0].ap, 1.0);
}

TEST(Metrics, PropertyMatchesBruteForce) {
  Gen g(81);
  const std::vector<std::string> vocab{"cat", "dog"};
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = pclip::test::toy_instance(g, 5, 10);
    for (std::size_t budget : {1, 3, 10}) {
      EXPECT_EQ(recall_at(t.proposals, t.gt, 0.5, budget),
                pclip::test::recall_oracle(t.proposals, t.gt, 1, 2, budget));
      EXPECT_EQ(average_recall(t.proposals, t.gt, budget),
                pclip::test::average_recall_oracle(t.proposals, t.gt, budget));
    }
    const auto report = detect_and_ap(t.detections, t.gt, vocab);
    const auto want = pclip::test::ap_oracle(t.detections, t.gt, vocab);
    ASSERT_EQ(report.per_class.size(), want.size());
    for (const auto& c : report.per_class) {
      EXPECT_NEAR(c.ap, want.at(c.category), 1e-12) << "trial " << trial << " " << c.category;
    }
  }
}

TEST(Metrics, PropertyRecallMonotoneInBudget) {
  Gen g(82);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = pclip::test::toy_instance(g, 5, 10);
    double prev = 0.0, prev_ar = 0.0;
    for (std::size_t budget = 1; budget <= 12; ++budget) {
      const double r = recall_at(t.proposals, t.gt, 0.5, budget);
      const double ar = average_recall(t.proposals, t.gt, budget);
      EXPECT_GE(r, prev);
      EXPECT_GE(ar, prev_ar);
      EXPECT_LE(ar, r + 1e-12);
      prev = r;
      prev_ar = ar;
    }
  }
}

TEST(EvaluateProposals, ReportAndFormats) {
  const auto gt = one_image({{{0, 0, 10, 10}, "x"}, {{20, 20, 30, 30}, "x"}});
  const RankedProposals props{{"a", {{0, 0, 10, 10}, {40, 40, 50, 50}, {20, 20, 30, 30}}}};
  const std::vector<std::size_t> budgets{1, 3};
  const auto r = evaluate_proposals(props, gt, budgets);
  EXPECT_EQ(r.images, 1u);
  EXPECT_EQ(r.ground_truth, 2u);
  EXPECT_EQ(r.recall50, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(r.average_recall, (std::vector<double>{0.5, 1.0}));
  const auto j = to_json(r);
  EXPECT_EQ(j["budgets"].dump(), "[1,3]");
  EXPECT_FALSE(j.contains("ap@0.5"));
  const auto table = format_table(r);
  EXPECT_NE(table.find("Recall@0.5"), std::string::npos);
  EXPECT_NE(table.find("1.0000"), std::string::npos);
}

TEST(CocoGroundTruth, ParsesAndClamps) {
  const auto gt = parse_coco_ground_truth(nlohmann::json::parse(R"({
    "images": [{"id": 1, "file_name": "dir/cat_001.jpg", "width": 50, "height": 40},
               {"id": 2, "width": 10, "height": 10}],
    "categories": [{"id": 7, "name": "cat"}, {"id": 3, "name": "dog"}],
    "annotations": [{"image_id": 1, "bbox": [10, 5, 60, 10], "category_id": 7}]
  })"));
  EXPECT_EQ(gt.categories, (std::vector<std::string>{"cat", "dog"}));
  ASSERT_EQ(gt.images.size(), 2u);
  ASSERT_EQ(gt.images.at("cat_001").size(), 1u);
  EXPECT_EQ(gt.images.at("cat_001")[0].box, (BBox{10, 5, 50, 15}));
  EXPECT_EQ(gt.images.at("cat_001")[0].category, "cat");
  EXPECT_TRUE(gt.images.at("2").empty());
  EXPECT_EQ(gt.box_count(), 1u);
}

TEST(CocoGroundTruth, ErrorsCarryJsonPath) {
  const std::string cats = R"("categories": [{"id": 1, "name": "cat"}])";
  const std::string imgs = R"("images": [{"id": 1, "width": 20, "height": 20}])";
  EXPECT_EQ(coco_location("[]"), "$");
  EXPECT_EQ(coco_location("{" + cats + ", \"annotations\": []}"), "$.images");
  EXPECT_EQ(coco_location("{" + cats + ", " + imgs +
                          R"(, "annotations": [{"image_id": 1, "bbox": [0, 0, 0, 5], "category_id": 1}]})"),
            "$.annotations[0].bbox[2]");
  EXPECT_EQ(coco_location("{" + cats + ", " + imgs +
                          R"(, "annotations": [{"image_id": 9, "bbox": [0, 0, 5, 5], "category_id": 1}]})"),
            "$.annotations[0].image_id");
  EXPECT_EQ(coco_location("{" + cats + ", " + imgs +
                          R"(, "annotations": [{"image_id": 1, "bbox": [0, 0, 5, 5], "category_id": 2}]})"),
            "$.annotations[0].category_id");
  EXPECT_EQ(coco_location("{" + cats + ", " + imgs +
                          R"(, "annotations": [{"image_id": 1, "bbox": [0, "a", 5, 5], "category_id": 1}]})"),
            "$.annotations[0].bbox[1]");
  EXPECT_EQ(coco_location("{" + cats + ", " + imgs +
                          R"(, "annotations": [{"image_id": 1, "bbox": [30, 30, 5, 5], "category_id": 1}]})"),
            "$.annotations[0].bbox");
  EXPECT_EQ(coco_location(R"({"categories": [{"id": 1, "name": "a"}, {"id": 1, "name": "b"}], )" +
                          imgs + R"(, "annotations": []})"),
            "$.categories[1].id");
}

TEST(JsonlGroundTruth, ParsesImagesWithoutObjects) {
  const auto gt = parse_jsonl_ground_truth(
      R"({"image_id": "a", "x0": 0, "y0": 0, "x1": 5, "y1": 5, "category": "dog"})" "\n"
      "\n"
      R"({"image_id": "b"})" "\n"
      R"({"image_id": "a", "x0": 1, "y0": 1, "x1": 3, "y1": 3, "category": "cat"})" "\n");
  EXPECT_EQ(gt.categories, (std::vector<std::string>{"dog", "cat"}));
  EXPECT_EQ(gt.images.at("a").size(), 2u);
  EXPECT_TRUE(gt.images.at("b").empty());
}

TEST(JsonlGroundTruth, ErrorsCarryLineNumbers) {
  const std::string good =
      R"({"image_id": "a", "x0": 0, "y0": 0, "x1": 5, "y1": 5, "category": "dog"})" "\n";
  EXPECT_EQ(jsonl_location(good + "{bad\n"), "line 2");
  EXPECT_EQ(jsonl_location(good + R"({"image_id": "a", "x0": 0, "y0": 0, "x1": 5, "category": "d"})"),
            "line 2");
  EXPECT_EQ(jsonl_location(R"({"image_id": "a", "x0": 0, "y0": 0, "x1": 5, "y1": 5})"), "line 1");
  EXPECT_EQ(jsonl_location(R"({"image_id": "a", "x0": 5, "y0": 0, "x1": 5, "y1": 5, "category": "d"})"),
            "line 1");
  EXPECT_EQ(jsonl_location(R"({"x0": 0})"), "line 1");
  EXPECT_EQ(jsonl_location(good), "none");
}

TEST(LoadGroundTruth, PicksFormatByExtensionAndNamesFile) {
  const auto dir = pclip::test::scratch_dir("gt");
  pclip::test::spit(dir / "gt.jsonl", R"({"image_id": "a", "x0": 0, "y0": 0, "x1": 5, "y1": 5, "category": "dog"})");
  EXPECT_EQ(load_ground_truth(dir / "gt.jsonl").box_count(), 1u);
  pclip::test::spit(dir / "gt.json", R"({"images": [], "annotations": [], "categories": []})");
  EXPECT_TRUE(load_ground_truth(dir / "gt.json").images.empty());
  pclip::test::spit(dir / "broken.json", "{");
  try {
    load_ground_truth(dir / "broken.json");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.json"), std::string::npos);
  }
  EXPECT_THROW(load_ground_truth(dir / "missing.json"), Error);
}
