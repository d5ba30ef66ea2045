#pragma once

#include <map>
#include <string>
#include <vector>

#include "sstap/data.hpp"
#include "sstap/eval.hpp"
#include "sstap/model.hpp"
#include "sstap/postprocess.hpp"

namespace sstap {

struct InferOptions {
  DecodeOptions decode;
  SoftNmsOptions nms;
};

// Evaluation-mode forward, decoding and Soft-NMS for one video.
template <typename R>
std::vector<Proposal> predict_proposals(const ProposalModel& model, const ParamStore<R>& params,
                                        const FeatureSequence& video, const InferOptions& opts = {});

template <typename R>
std::map<std::string, std::vector<Proposal>> predict_all(const ProposalModel& model, const ParamStore<R>& params,
                                                         const std::vector<FeatureSequence>& videos,
                                                         const InferOptions& opts = {});

// Ground truth of every annotated video, regardless of its labeled flag.
std::vector<std::pair<std::string, AnnotationSet>> ground_truth_of(const std::vector<FeatureSequence>& videos);

// Predicts and scores `videos` on the given threshold grid and AN = 1..100.
template <typename R>
EvalReport evaluate_params(const ProposalModel& model, const ParamStore<R>& params,
                           const std::vector<FeatureSequence>& videos, const std::vector<double>& thresholds,
                           const InferOptions& opts = {});

}  // namespace sstap
