#include "kestrel/runner.hpp"

#include <atomic>
#include <map>
#include <thread>

#include "kestrel/error.hpp"
#include "kestrel/http_backends.hpp"
#include "kestrel/refine.hpp"

namespace kestrel {

using nlohmann::json;

namespace {

const EndpointBinding& binding(const EngineConfig& config, Role role) {
  switch (role) {
    case Role::Initializer: return config.backends.initializer;
    case Role::Judge: return config.backends.judge;
    case Role::Refiner: return config.backends.refiner;
    case Role::ColorObserver: return config.backends.color_observer;
    case Role::Grounder: return config.backends.grounder;
  }
  return config.backends.initializer;
}

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

RunTrace failed_trace(const Sample& sample, const std::string& message) {
  RunTrace t;
  t.sample_id = sample.sample_id;
  t.question = sample.question;
  t.image = sample.image.describe();
  t.meta = sample.meta;
  t.stop_reason = StopReason::EarlyError;
  t.error_stage = "backends";
  t.error = message;
  t.events.push_back({"backends", "error", message});
  return t;
}

}  // namespace

std::shared_ptr<ChatBackend> chat_backend_for(const EngineConfig& config, Role role) {
  const auto& b = binding(config, role);
  if (b.endpoint == "none") return nullptr;
  if (is_url(b.endpoint)) {
    return std::make_shared<HttpChatBackend>(b.endpoint, http_options(config.backends, config.backends.chat_path));
  }
  throw Error(ErrorCode::InvalidConfig,
              "backends." + std::string(to_string(role)) + ": endpoint '" + b.endpoint + "' is not usable here");
}

std::shared_ptr<SegmentationBackend> grounder_for(const EngineConfig& config) {
  const auto& b = config.backends.grounder;
  if (b.endpoint == "none") return nullptr;
  if (is_url(b.endpoint)) {
    return std::make_shared<HttpSegmentationBackend>(
        b.endpoint, http_options(config.backends, config.backends.segment_path), config.grounding.send_image_as_path);
  }
  throw Error(ErrorCode::InvalidConfig, "backends.grounder: endpoint '" + b.endpoint + "' is not usable here");
}

BackendSet live_backends(const EngineConfig& config) {
  BackendSet s;
  s.initializer = chat_backend_for(config, Role::Initializer);
  s.judge = chat_backend_for(config, Role::Judge);
  s.refiner = chat_backend_for(config, Role::Refiner);
  s.color_observer = chat_backend_for(config, Role::ColorObserver);
  s.grounder = grounder_for(config);
  return s;
}

BackendSet scene_backends(const EngineConfig& config, std::shared_ptr<const synthetic::SceneSpec> scene) {
  const auto fake = synthetic::synthetic_backends(scene, config.synthetic, config.run.seed);
  auto pick = [&](Role role, const std::shared_ptr<ChatBackend>& synth) {
    return binding(config, role).endpoint == "synthetic" ? synth : chat_backend_for(config, role);
  };
  BackendSet s;
  s.initializer = pick(Role::Initializer, fake.initializer);
  s.judge = pick(Role::Judge, fake.judge);
  s.refiner = pick(Role::Refiner, fake.refiner);
  s.color_observer = pick(Role::ColorObserver, fake.color_observer);
  s.grounder = config.backends.grounder.endpoint == "synthetic" ? fake.grounder : grounder_for(config);
  return s;
}

std::vector<RunTrace> run_batch(const std::vector<Sample>& samples, const BackendFactory& factory,
                                const EngineConfig& config, const Templates& templates, const BatchOptions& options) {
  std::vector<RunTrace> traces(samples.size());
  std::optional<OrderedTraceWriter> ordered;
  if (options.writer) ordered.emplace(*options.writer);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      const auto& sample = samples[i];
      RunTrace trace;
      try {
        auto backends = factory(sample);
        if (options.record) backends = recording_backends(backends, options.record, sample.sample_id);
        trace = run_sample(sample, backends, config, templates);
      } catch (const std::exception& e) {
        trace = failed_trace(sample, e.what());
      }
      if (ordered) ordered->submit(i, trace);
      traces[i] = std::move(trace);
    }
  };

  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(samples.size())));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (ordered) ordered->flush();
  return traces;
}

Simulation make_simulation(const EngineConfig& config, int scenes) {
  Simulation sim;
  for (int i = 0; i < scenes; ++i) {
    auto scene = std::make_shared<const synthetic::SceneSpec>(
        synthetic::generate_scene(synthetic::scene_seed(config.run.seed, i), config.synthetic.difficulty,
                                  config.synthetic.canvas_width, config.synthetic.canvas_height));
    for (auto& s : synthetic::scene_samples(*scene)) sim.samples.push_back(std::move(s));
    sim.scenes.push_back(std::move(scene));
  }
  return sim;
}

std::vector<RunTrace> run_simulation(const Simulation& sim, const EngineConfig& config, const Templates& templates,
                                     const BatchOptions& options) {
  std::map<std::string, std::shared_ptr<const synthetic::SceneSpec>> by_seed;
  for (const auto& s : sim.scenes) by_seed[std::to_string(s->seed)] = s;
  auto factory = [&](const Sample& sample) {
    auto it = sample.meta.find("scene_seed");
    if (it == sample.meta.end() || !by_seed.count(it->second)) {
      throw Error(ErrorCode::InvalidArgument, "sample " + sample.sample_id + " has no scene");
    }
    return scene_backends(config, by_seed.at(it->second));
  };
  return run_batch(unlabeled(sim.samples), factory, config, templates, options);
}

std::vector<RunTrace> replay_run(const std::vector<Sample>& samples, std::shared_ptr<const ResponseStore> store,
                                 const EngineConfig& config, const Templates& templates, const BatchOptions& options) {
  const bool observer = config.backends.color_observer.endpoint != "none";
  auto factory = [&](const Sample& sample) { return replay_backends(store, sample.sample_id, observer); };
  BatchOptions opts = options;
  opts.record = nullptr;
  return run_batch(samples, factory, config, templates, opts);
}

json run_manifest(const EngineConfig& config, const Templates& templates, const std::string& command,
                  std::size_t samples) {
  json bindings = json::object();
  for (auto role : kAllRoles) {
    const auto& b = binding(config, role);
    bindings[std::string(to_string(role))] = {{"endpoint", b.endpoint}, {"model", b.model}};
  }
  return {{"version", kVersion},
          {"command", command},
          {"config_hash", config_hash(config)},
          {"config", serialize_config(config)},
          {"templates", templates.versions()},
          {"bindings", bindings},
          {"seed", config.run.seed},
          {"samples", samples}};
}

std::vector<Sample> unlabeled(const std::vector<LabeledSample>& samples) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.sample);
  return out;
}

}  // namespace kestrel
