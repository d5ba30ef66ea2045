#include "sstap/pipeline.hpp"

namespace sstap {

template <typename R>
std::vector<Proposal> predict_proposals(const ProposalModel& model, const ParamStore<R>& params,
                                        const FeatureSequence& video, const InferOptions& opts) {
  const auto fr = model.forward(params, matrix_cast<R>(video.values), Heads::proposal_only());
  return soft_nms(decode_candidates(fr.out, opts.decode), opts.nms);
}

template <typename R>
std::map<std::string, std::vector<Proposal>> predict_all(const ProposalModel& model, const ParamStore<R>& params,
                                                         const std::vector<FeatureSequence>& videos,
                                                         const InferOptions& opts) {
  std::map<std::string, std::vector<Proposal>> out;
  for (const auto& v : videos) out[v.video_id] = predict_proposals(model, params, v, opts);
  return out;
}

std::vector<std::pair<std::string, AnnotationSet>> ground_truth_of(const std::vector<FeatureSequence>& videos) {
  std::vector<std::pair<std::string, AnnotationSet>> gt;
  for (const auto& v : videos) {
    if (v.annotations) gt.emplace_back(v.video_id, *v.annotations);
  }
  return gt;
}

template <typename R>
EvalReport evaluate_params(const ProposalModel& model, const ParamStore<R>& params,
                           const std::vector<FeatureSequence>& videos, const std::vector<double>& thresholds,
                           const InferOptions& opts) {
  const auto props = predict_all(model, params, videos, opts);
  return make_report(evaluate_dataset(props, ground_truth_of(videos), thresholds, an_grid(100)));
}

#define SSTAP_INSTANTIATE(R)                                                                                 \
  template std::vector<Proposal> predict_proposals(const ProposalModel&, const ParamStore<R>&,               \
                                                   const FeatureSequence&, const InferOptions&);             \
  template std::map<std::string, std::vector<Proposal>> predict_all(                                         \
      const ProposalModel&, const ParamStore<R>&, const std::vector<FeatureSequence>&, const InferOptions&); \
  template EvalReport evaluate_params(const ProposalModel&, const ParamStore<R>&,                            \
                                      const std::vector<FeatureSequence>&, const std::vector<double>&,       \
                                      const InferOptions&);
SSTAP_INSTANTIATE(float)
SSTAP_INSTANTIATE(double)
#undef SSTAP_INSTANTIATE

}  // namespace sstap
