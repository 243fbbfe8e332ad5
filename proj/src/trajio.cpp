#include "mgcat/trajio.hpp"

#include <fstream>

#include "mgcat/csv.hpp"

namespace mgcat {

namespace {

constexpr const char* kTrajHeader = "traj_id,seq_idx,seg_id,timestamp_s";
constexpr const char* kRecHeader = "traj_id,seq_idx,seg_id,timestamp_s,source";

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Shared reader; the recovered schema allows an empty timestamp on generated
// rows.
std::vector<Trajectory> read_rows(const std::filesystem::path& path, bool recovered, const RoadNetwork* net) {
  csv::Reader rd(path);
  rd.expect_header(recovered ? kRecHeader : kTrajHeader);
  const std::size_t ncol = recovered ? 5 : 4;
  std::vector<Trajectory> out;
  std::vector<std::string> f;
  while (rd.next(f)) {
    if (f.size() != ncol) rd.fail("expected " + std::to_string(ncol) + " fields");
    const auto id = rd.to_int(f[0]);
    const auto idx = rd.to_int(f[1]);
    const auto seg = rd.to_int(f[2]);
    if (out.empty() || out.back().id != id) {
      for (const auto& t : out)
        if (t.id == id) rd.fail("rows of trajectory " + std::to_string(id) + " are not contiguous");
      out.push_back(Trajectory{id, {}, {}});
    }
    auto& t = out.back();
    if (idx != static_cast<std::int64_t>(t.size())) rd.fail("seq_idx out of order");
    if (seg < 0 || (net && static_cast<std::size_t>(seg) >= net->size()))
      rd.fail("unknown segment id " + std::to_string(seg));
    t.segs.push_back(static_cast<SegId>(seg));
    if (recovered) {
      if (f[4] != "observed" && f[4] != "generated") rd.fail("source must be observed or generated");
      t.times.push_back(f[3].empty() ? 0.0 : rd.to_double(f[3]));
    } else {
      const double ts = rd.to_double(f[3]);
      if (!t.times.empty() && ts < t.times.back()) rd.fail("timestamps must be non-decreasing");
      t.times.push_back(ts);
    }
  }
  return out;
}

}  // namespace

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path, const RoadNetwork* net) {
  return read_rows(path, false, net);
}

void save_trajectories(const std::vector<Trajectory>& trajs, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kTrajHeader << '\n';
  for (const auto& t : trajs)
    for (std::size_t i = 0; i < t.size(); ++i)
      out << t.id << ',' << i << ',' << t.segs[i] << ',' << csv::fmt(t.times.empty() ? 0.0 : t.times[i]) << '\n';
}

RecoveredTrajectory annotate_recovery(const Trajectory& observed, const std::vector<SegId>& recovered) {
  RecoveredTrajectory r;
  r.id = observed.id;
  r.segs = recovered;
  r.observed.assign(recovered.size(), false);
  r.times.assign(recovered.size(), 0.0);
  std::size_t k = 0;
  for (std::size_t i = 0; i < recovered.size() && k < observed.size(); ++i) {
    if (recovered[i] == observed.segs[k]) {
      r.observed[i] = true;
      r.times[i] = observed.times.empty() ? 0.0 : observed.times[k];
      ++k;
    }
  }
  return r;
}

void save_recovered(const std::vector<RecoveredTrajectory>& recs, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kRecHeader << '\n';
  for (const auto& r : recs)
    for (std::size_t i = 0; i < r.segs.size(); ++i) {
      out << r.id << ',' << i << ',' << r.segs[i] << ',';
      if (r.observed[i]) out << csv::fmt(r.times[i]);
      out << ',' << (r.observed[i] ? "observed" : "generated") << '\n';
    }
}

std::vector<Trajectory> load_recovered(const std::filesystem::path& path) { return read_rows(path, true, nullptr); }

}  // namespace mgcat
