#include "dincikf/runner.hpp"

#include "dincikf/errors.hpp"
#include "dincikf/network.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace dincikf {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Runs f(0..n-1) on up to `threads` threads. The exception of the lowest failing
/// index is rethrown so that failures do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) f(k);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < n; k += workers) {
        try {
          f(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

double safe_nees(const VectorXd& zeta, const MatrixXd& cov) {
  try {
    return nees(zeta, cov);
  } catch (const NumericalFailure&) {
    return kNaN;
  }
}

json pose_array(const GroupElement& g) {
  const auto a = g.pose_row_major();
  return json(std::vector<double>(a.begin(), a.end()));
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json rmse_json(const Rmse& r) { return {{"rmse_pos", number_or_null(r.pos)}, {"rmse_rot", number_or_null(r.rot)}}; }

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Per-robot state of the auxiliary upper-bound recursion.
struct AubsState {
  MatrixXd posterior;   // Pi_hat
  MatrixXd predicted;   // Pi_bar of the current round
  MatrixXd local_info;  // H^T R^-1 H of the current round
  Matrix6 breve_pose;   // G Pi_breve G^T, used by children in the spanning tree
};

RunResult simulate(const ScenarioConfig& base, const RunOptions& opt, const std::vector<double>* alphas) {
  ScenarioConfig cfg = base;
  if (opt.steps) {
    if (*opt.steps <= 0) throw InvalidArgument("steps must be positive");
    cfg.steps = *opt.steps;
  }
  const std::uint64_t seed = opt.seed.value_or(cfg.seed);
  FilterConfig fc;
  fc.algorithm = opt.algorithm;
  fc.object_gate = cfg.object_gate;
  fc.gravity = cfg.gravity;
  const CommGraph graph = cfg.graph();
  const SpanningTree tree = check_spanning_tree(graph);
  const std::size_t n = cfg.robots.size();

  std::map<int, std::size_t> object_index;
  for (std::size_t q = 0; q < cfg.objects.size(); ++q) object_index[cfg.objects[q].id] = q;

  WorldState world = initial_world(cfg);
  std::vector<RobotBelief> beliefs = initial_beliefs(world, cfg, seed);

  RunResult res;
  res.summary.algorithm = opt.algorithm;
  res.summary.seed = seed;

  std::vector<AubsState> aubs;
  if (alphas) {
    for (const RobotBelief& b : beliefs) aubs.push_back({b.cov(), {}, {}, Matrix6::Zero()});
  }

  std::vector<double> sum_rot(n, 0.0), sum_pos(n, 0.0);
  double robot_rot = 0.0, robot_pos = 0.0, object_rot = 0.0, object_pos = 0.0;
  int object_rounds = 0;

  for (int k = 1; k <= cfg.steps; ++k) {
    try {
      const GroundTruthStep gt = ground_truth_step(world, cfg);
      const std::vector<std::vector<Measurement>> meas = sense(gt.world, cfg, seed);

      std::vector<ControlInput> inputs(n);
      std::vector<ProcessMatrices> pms(n);
      std::vector<std::optional<LocalUpdateResult>> local(n);
      parallel_for(n, opt.threads, [&](std::size_t a) {
        RandomStream rng = RandomStream::derive(seed, cfg.robots[a].id, k, kSlotProcess);
        inputs[a] = noisy_input(gt.inputs[a], rng);
        if (alphas) pms[a] = process_matrices(beliefs[a], inputs[a], fc);
        local[a].emplace(local_update(preintegrate(beliefs[a], inputs[a], fc), meas[a], k, fc));
      });

      std::vector<RobotBelief> post_kf;
      post_kf.reserve(n);
      for (std::size_t a = 0; a < n; ++a) post_kf.push_back(local[a]->belief);
      const RoundMailbox box = exchange(k, post_kf, meas, graph);

      std::vector<std::optional<FusionResult>> fused(n);
      parallel_for(n, opt.threads, [&](std::size_t a) {
        fused[a].emplace(neighbor_fusion(post_kf[a], box.inbox(cfg.robots[a].id), k, fc));
      });

      RoundRecord rec;
      rec.round = k;

      if (alphas) {
        for (std::size_t a = 0; a < n; ++a) {
          AubsState& s = aubs[a];
          const RobotBelief& prior = beliefs[a];
          s.predicted = augment_propagate(s.posterior, pms[a].transition, pms[a].noise, prior.object_count());
          for (std::size_t q = 0; q < local[a]->initialized.size(); ++q)
            s.predicted = augment_for_new_object(s.predicted, prior.kind(), local[a]->init_noise[q]);
          const StackedObservation& obs = local[a]->observations;
          s.local_info = MatrixXd::Zero(s.predicted.rows(), s.predicted.cols());
          if (!obs.empty()) {
            s.local_info = obs.jacobian.transpose() * spd_inverse(obs.noise_cov, "aubs: R") * obs.jacobian;
            symmetrize(s.local_info);
          }
          MatrixXd breve_info = spd_inverse(s.predicted, "aubs: predicted bound") + s.local_info;
          symmetrize(breve_info);
          s.breve_pose = spd_inverse(breve_info, "aubs: updated bound").topLeftCorner<6, 6>();
        }
        for (std::size_t a = 0; a < n; ++a) {
          AubsState& s = aubs[a];
          const int id = cfg.robots[a].id;
          const double gamma = fused[a]->gamma;
          MatrixXd info = gamma * s.local_info;
          const auto parent = tree.parent.find(id);
          const double pose_gamma = fused[a]->pose_gamma;
          if (pose_gamma < 1.0 && parent != tree.parent.end() && parent->second != kAbsoluteNode) {
            const auto inbox = box.inbox(id);
            for (std::size_t q = 0; q < inbox.size(); ++q) {
              if (inbox[q].sender != parent->second) continue;
              const double beta = fused[a]->pose_weights[q];
              const Matrix6 m = aubs[cfg.robot_index(parent->second)].breve_pose + graph.edge(parent->second, id).noise_cov;
              info.topLeftCorner<6, 6>() += (1.0 - pose_gamma) * beta * spd_inverse(m, "aubs: parent bound");
            }
          }
          s.posterior = aubs_update(s.predicted, (*alphas)[a], info);
          const MatrixXd& p = fused[a]->belief.cov();
          rec.aubs.push_back({id, (*alphas)[a], s.posterior.trace(), p.trace(), min_eigenvalue(s.posterior - p)});
        }
      }

      world = gt.world;
      for (std::size_t a = 0; a < n; ++a) beliefs[a] = std::move(fused[a]->belief);

      if (opt.log_messages)
        for (const auto& [recipient, msgs] : box.inboxes)
          for (const NeighborMessage& m : msgs) res.messages.push_back(message_to_json(m));

      double rot2 = 0.0, pos2 = 0.0, orot2 = 0.0, opos2 = 0.0;
      int pairs = 0;
      for (std::size_t a = 0; a < n; ++a) {
        const RobotBelief& b = beliefs[a];
        const GroupElement truth = world.robots[a].pose();
        const GroupElement est = b.own_pose();
        RobotRoundRecord r;
        r.robot_id = b.robot_id();
        r.err_rot = rotation_error(est, truth);
        r.err_pos = position_error(est, truth);
        const MatrixXd pr = b.robot_cov();
        r.trace_p = pr.trace();
        r.nees = safe_nees(right_invariant_error(world.robots[a], b.own_state()), pr);
        r.gamma = fused[a]->gamma;
        sum_rot[a] += r.err_rot;
        sum_pos[a] += r.err_pos;
        rot2 += r.err_rot * r.err_rot;
        pos2 += r.err_pos * r.err_pos;
        rec.robots.push_back(r);
        for (const TrackedObject& obj : b.objects()) {
          const GroupElement& ot = world.objects[object_index.at(obj.id)];
          orot2 += std::pow(rotation_error(obj.pose, ot), 2);
          opos2 += std::pow(position_error(obj.pose, ot), 2);
          ++pairs;
        }
        if (opt.keep_trajectories) {
          json line = {{"round", k},
                       {"robot", b.robot_id()},
                       {"truth", pose_array(truth)},
                       {"estimate", pose_array(est)}};
          res.trajectories.push_back(line.dump());
        }
      }
      rec.avg_robot = {std::sqrt(rot2 / n), std::sqrt(pos2 / n)};
      robot_rot += rec.avg_robot.rot;
      robot_pos += rec.avg_robot.pos;
      if (pairs > 0) {
        rec.avg_object = Rmse{std::sqrt(orot2 / pairs), std::sqrt(opos2 / pairs)};
        object_rot += rec.avg_object->rot;
        object_pos += rec.avg_object->pos;
        ++object_rounds;
      }
      res.rounds.push_back(std::move(rec));
    } catch (const NumericalFailure& e) {
      res.failure = RunFailure{k, e.what()};
    } catch (const Singularity& e) {
      res.failure = RunFailure{k, e.what()};
    } catch (const BranchAmbiguity& e) {
      res.failure = RunFailure{k, e.what()};
    }
    if (res.failure) break;
  }

  const int rounds = static_cast<int>(res.rounds.size());
  res.summary.rounds = rounds;
  const double denom = rounds > 0 ? rounds : kNaN;
  for (std::size_t a = 0; a < n; ++a) res.summary.per_robot[cfg.robots[a].id] = {sum_rot[a] / denom, sum_pos[a] / denom};
  res.summary.avg_robot = {robot_rot / denom, robot_pos / denom};
  res.summary.avg_object = object_rounds > 0 ? Rmse{object_rot / object_rounds, object_pos / object_rounds}
                                             : Rmse{kNaN, kNaN};
  res.final_beliefs = std::move(beliefs);
  res.final_world = std::move(world);
  return res;
}

}  // namespace

RunResult run_simulation(const ScenarioConfig& cfg, const RunOptions& options) {
  if (!options.aubs) return simulate(cfg, options, nullptr);
  // alpha_i is the smallest gamma robot i uses over the run, so a first pass records it.
  RunOptions probe = options;
  probe.aubs = false;
  probe.log_messages = false;
  probe.keep_trajectories = false;
  const RunResult first = simulate(cfg, probe, nullptr);
  std::vector<double> alphas(cfg.robots.size(), 1.0);
  for (const RoundRecord& r : first.rounds)
    for (std::size_t a = 0; a < r.robots.size(); ++a) alphas[a] = std::min(alphas[a], r.robots[a].gamma);
  return simulate(cfg, options, &alphas);
}

bool is_stand_in(Algorithm a) { return a == Algorithm::CiOnly; }

std::string stand_in_note(Algorithm a) {
  if (a == Algorithm::CiOnly)
    return "stand-in for SCI on Lie groups: every fusion, including local measurements, is a gamma-weighted CI";
  return "";
}

std::string summary_json(const RunResult& result) {
  const RunSummary& s = result.summary;
  json j;
  j["algo"] = std::string(to_string(s.algorithm));
  j["seed"] = s.seed;
  j["rounds"] = s.rounds;
  j["status"] = result.failure ? "failed" : "ok";
  if (result.failure) j["failure"] = {{"round", result.failure->round}, {"what", result.failure->what}};
  if (is_stand_in(s.algorithm)) j["note"] = stand_in_note(s.algorithm);
  json per = json::object();
  for (const auto& [id, r] : s.per_robot) per[std::to_string(id)] = rmse_json(r);
  j["per_robot"] = per;
  j["avg_robot"] = rmse_json(s.avg_robot);
  j["avg_object"] = rmse_json(s.avg_object);
  return j.dump(2) + "\n";
}

void write_run_artifacts(const RunResult& result, const RunOptions& options, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  auto open = [&](const char* name) {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + (out / name).string());
    return f;
  };
  const std::string algo(to_string(result.summary.algorithm));
  {
    std::ofstream f = open("metrics.csv");
    f << "round,robot_id,err_rot_rad,err_pos_m,trace_P,nees,algo\n";
    for (const RoundRecord& r : result.rounds)
      for (const RobotRoundRecord& x : r.robots)
        f << r.round << ',' << x.robot_id << ',' << fmt(x.err_rot) << ',' << fmt(x.err_pos) << ',' << fmt(x.trace_p)
          << ',' << fmt(x.nees) << ',' << algo << '\n';
  }
  {
    std::ofstream f = open("summary.json");
    f << summary_json(result);
  }
  {
    std::ofstream f = open("trajectories.jsonl");
    for (const std::string& line : result.trajectories) f << line << '\n';
  }
  if (options.log_messages) {
    std::ofstream f = open("messages.jsonl");
    for (const std::string& line : result.messages) f << line << '\n';
  }
  if (options.aubs) {
    std::ofstream f = open("aubs.csv");
    f << "round,robot_id,alpha,trace_Pi,trace_P,min_eig_diff\n";
    for (const RoundRecord& r : result.rounds)
      for (const AubsRecord& x : r.aubs)
        f << r.round << ',' << x.robot_id << ',' << fmt(x.alpha) << ',' << fmt(x.trace_pi) << ',' << fmt(x.trace_p)
          << ',' << fmt(x.min_eig_diff) << '\n';
  }
}

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<CompareRow> compare(const ScenarioConfig& cfg, const std::vector<RunSpec>& specs,
                                const CompareOptions& options) {
  if (specs.size() < 2) throw InvalidArgument("compare needs at least two run specs");
  std::vector<RunSummary> summaries(specs.size());
  std::vector<char> failed(specs.size(), 0);
  parallel_for(specs.size(), options.jobs, [&](std::size_t k) {
    RunOptions ro;
    ro.algorithm = specs[k].algorithm;
    ro.seed = specs[k].seed;
    ro.steps = options.steps;
    const RunResult r = run_simulation(cfg, ro);
    summaries[k] = r.summary;
    failed[k] = r.failure.has_value();
  });

  std::vector<CompareRow> rows;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const bool known = std::any_of(rows.begin(), rows.end(), [&](const CompareRow& r) { return r.algorithm == specs[k].algorithm; });
    if (!known) rows.push_back({specs[k].algorithm, 0, 0, {}, {}, {}});
  }
  for (CompareRow& row : rows) {
    std::map<int, std::vector<double>> rpos, rrot;
    std::vector<double> apos, arot, opos, orot;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      if (specs[k].algorithm != row.algorithm) continue;
      ++row.runs;
      if (failed[k]) ++row.failed;
      // A run stopped by a numerical failure contributes the rounds it completed.
      if (summaries[k].rounds == 0) continue;
      for (const auto& [id, r] : summaries[k].per_robot) {
        rpos[id].push_back(r.pos);
        rrot[id].push_back(r.rot);
      }
      apos.push_back(summaries[k].avg_robot.pos);
      arot.push_back(summaries[k].avg_robot.rot);
      opos.push_back(summaries[k].avg_object.pos);
      orot.push_back(summaries[k].avg_object.rot);
    }
    for (const auto& [id, v] : rpos) row.per_robot[id] = {median(rrot[id]), median(v)};
    row.avg_robot = {median(arot), median(apos)};
    row.avg_object = {median(orot), median(opos)};
  }
  return rows;
}

std::vector<CompareRow> compare(const std::vector<RunSpec>& specs, const CompareOptions& options) {
  if (specs.size() < 2) throw InvalidArgument("compare needs at least two run specs");
  const auto canonical = [](const std::string& p) { return std::filesystem::weakly_canonical(p).string(); };
  const std::string first = canonical(specs.front().scenario);
  for (const RunSpec& s : specs)
    if (canonical(s.scenario) != first)
      throw InvalidArgument("compare: specs use different scenarios (" + specs.front().scenario + " vs " + s.scenario + ")");
  return compare(load_scenario(specs.front().scenario), specs, options);
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "row,algo,runs,failed,rmse_pos_m,rmse_rot_rad,stand_in\n";
  for (const CompareRow& r : rows) {
    const std::string tail = "," + std::to_string(is_stand_in(r.algorithm) ? 1 : 0) + "\n";
    const std::string head = "," + std::string(to_string(r.algorithm)) + "," + std::to_string(r.runs) + "," +
                             std::to_string(r.failed) + ",";
    for (const auto& [id, x] : r.per_robot) out << "robot_" << id << head << fmt(x.pos) << ',' << fmt(x.rot) << tail;
    out << "avg_robot" << head << fmt(r.avg_robot.pos) << ',' << fmt(r.avg_robot.rot) << tail;
    out << "avg_object" << head << fmt(r.avg_object.pos) << ',' << fmt(r.avg_object.rot) << tail;
  }
  return out.str();
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  if (rows.empty()) return "";
  auto cell = [](const Rmse& x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f/%.3f", x.pos, x.rot);
    return std::string(buf);
  };
  std::vector<std::string> header = {""};
  for (const CompareRow& r : rows) header.push_back(std::string(to_string(r.algorithm)) + (is_stand_in(r.algorithm) ? "*" : ""));
  std::vector<std::vector<std::string>> body;
  for (const auto& [id, x] : rows.front().per_robot) {
    std::vector<std::string> line = {"Robot " + std::to_string(id)};
    for (const CompareRow& r : rows) line.push_back(r.per_robot.count(id) ? cell(r.per_robot.at(id)) : "-");
    body.push_back(line);
  }
  std::vector<std::string> avg = {"Average Robot"};
  std::vector<std::string> obj = {"Average Object"};
  for (const CompareRow& r : rows) {
    avg.push_back(cell(r.avg_robot));
    obj.push_back(cell(r.avg_object));
  }
  body.push_back(avg);
  body.push_back(obj);

  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : body) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c] << std::string(width[c] - line[c].size(), ' ');
      out << (c + 1 < line.size() ? "  " : "\n");
    }
  };
  emit(header);
  for (const auto& line : body) emit(line);
  out << "cells: median RMSE pos (m) / rot (rad) over " << rows.front().runs << " runs\n";
  for (const CompareRow& r : rows)
    if (is_stand_in(r.algorithm)) out << "* " << stand_in_note(r.algorithm) << "\n";
  for (const CompareRow& r : rows)
    if (r.failed > 0)
      out << to_string(r.algorithm) << ": " << r.failed << " of " << r.runs
          << " runs stopped early on a numerical failure; their completed rounds are included\n";
  return out.str();
}

}  // namespace dincikf
