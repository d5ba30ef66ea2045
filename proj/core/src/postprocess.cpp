#include "sstap/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sstap/data.hpp"
#include "sstap/error.hpp"

namespace sstap {

namespace {

bool ranks_before(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

}  // namespace

template <typename R>
std::vector<std::size_t> boundary_candidates(const std::vector<R>& p, double peak_fraction) {
  std::vector<std::size_t> out;
  if (p.empty()) return out;
  const double top = static_cast<double>(*std::max_element(p.begin(), p.end()));
  for (std::size_t t = 0; t < p.size(); ++t) {
    const bool left = t == 0 || p[t] > p[t - 1];
    const bool right = t + 1 == p.size() || p[t] > p[t + 1];
    // a one-snippet sequence has no neighbours to beat
    const bool local_max = p.size() > 1 && left && right;
    if (local_max || static_cast<double>(p[t]) > peak_fraction * top) out.push_back(t);
  }
  return out;
}

template <typename R>
std::vector<Proposal> decode_candidates(const ModelOutputs<R>& out, const DecodeOptions& opts) {
  std::vector<Proposal> props;
  if (!out.has_proposals()) return props;
  const std::size_t T = out.p_s.size();
  const std::size_t D = out.m_cc.rows();
  const auto starts = boundary_candidates(out.p_s, opts.peak_fraction);
  const auto ends = boundary_candidates(out.p_e, opts.peak_fraction);
  for (std::size_t s : starts) {
    for (std::size_t e : ends) {
      if (e <= s) continue;
      const std::size_t d = e - s;
      if (d >= D || e + 1 > T) continue;
      const double score = static_cast<double>(out.p_s[s]) * static_cast<double>(out.p_e[e]) *
                           static_cast<double>(out.m_cc(d, s)) * static_cast<double>(out.m_cr(d, s));
      props.push_back({static_cast<double>(s), static_cast<double>(e + 1), score});
    }
  }
  std::sort(props.begin(), props.end(), ranks_before);
  return props;
}

std::vector<Proposal> soft_nms(std::vector<Proposal> pool, const SoftNmsOptions& opts) {
  if (!(opts.sigma > 0.0)) throw ArgumentError("soft_nms: sigma must be > 0");
  for (const auto& p : pool) {
    if (!(p.score >= 0.0)) throw ArgumentError("soft_nms: scores must be >= 0");
  }
  std::vector<Proposal> kept;
  while (!pool.empty() && kept.size() < opts.max_out) {
    auto best = std::min_element(pool.begin(), pool.end(), ranks_before);
    if (best->score < opts.score_floor) break;
    const Proposal top = *best;
    pool.erase(best);
    kept.push_back(top);
    const Segment ts{top.start, top.end};
    for (auto& p : pool) {
      const double iou = iou_1d(ts, {p.start, p.end});
      if (iou > 0.0) p.score *= std::exp(-iou * iou / opts.sigma);
    }
  }
  return kept;
}

void write_proposals(const std::vector<VideoProposals>& videos, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "# video_id start end score start_norm end_norm\n";
  char buf[256];
  for (const auto& v : videos) {
    const double T = static_cast<double>(v.T);
    for (const auto& p : v.proposals) {
      std::snprintf(buf, sizeof buf, " %.17g %.17g %.17g %.17g %.17g\n", p.start, p.end, p.score, p.start / T,
                    p.end / T);
      os << v.video_id << buf;
    }
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::map<std::string, std::vector<Proposal>> read_proposals(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open proposal file " + path.string());
  std::map<std::string, std::vector<Proposal>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id;
    Proposal p;
    double sn = 0.0, en = 0.0;
    if (!(ls >> id >> p.start >> p.end >> p.score >> sn >> en) || !std::isfinite(p.start) || !std::isfinite(p.end) ||
        !std::isfinite(p.score) || p.start >= p.end || p.start < 0.0) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed proposal line");
    }
    out[id].push_back(p);
  }
  return out;
}

template std::vector<Proposal> decode_candidates(const ModelOutputs<float>&, const DecodeOptions&);
template std::vector<Proposal> decode_candidates(const ModelOutputs<double>&, const DecodeOptions&);
template std::vector<std::size_t> boundary_candidates(const std::vector<float>&, double);
template std::vector<std::size_t> boundary_candidates(const std::vector<double>&, double);

}  // namespace sstap
