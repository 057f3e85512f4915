// Operator CLI: deploy the listener agents, relay and decoys; run seeded
// attack campaigns; analyze captures and render report tables.

#include "hmx/decoy.hpp"
#include "hmx/forwarder.hpp"
#include "hmx/harness.hpp"
#include "hmx/log.hpp"
#include "hmx/registry.hpp"
#include "hmx/sau.hpp"
#include "hmx/wormhole.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) {
    g_stop.store(true);
}

void wait_for_signal(const std::function<void()>& tick = {}) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        if (tick) {
            tick();
        }
    }
}

int cmd_topo_validate(const std::string& file) {
    const hmx::Topology topo = hmx::load_topology_file(file);
    std::cout << "ok: " << topo.devices.size() << " devices, " << topo.wormholes.size()
              << " wormholes, " << topo.mappings.size() << " mappings, "
              << hmx::exposed_service_count(topo) << " exposed services\n";
    return 0;
}

int cmd_topo_build(int devices, int wormholes, int replication, int base_port, int max_conn,
                   const std::string& out) {
    std::vector<hmx::DeviceSpec> devs;
    for (int i = 0; i < devices; ++i) {
        devs.push_back({"dev-" + std::to_string(i),
                        "Generic Camera",
                        {"127.0.0.1", static_cast<std::uint16_t>(1024 + i % 64000)},
                        {"admin", "admin"},
                        hmx::Difficulty::Easy,
                        hmx::ServiceProtocol::Http});
    }
    std::vector<hmx::WormholeSpec> whs;
    for (int i = 0; i < wormholes; ++i) {
        whs.push_back({"wh-" + std::to_string(i), "127.0.0.1", "City-" + std::to_string(i), "XX",
                       "generated", {}});
    }
    hmx::Topology topo = hmx::build_topology(std::move(devs), std::move(whs), replication,
                                             static_cast<std::uint16_t>(base_port), max_conn);
    std::cout << "built: " << topo.mappings.size() << " mappings, "
              << hmx::exposed_service_count(topo) << " exposed services\n";
    if (!out.empty()) {
        hmx::save_topology_file(topo, out);
        std::cout << "wrote " << out << "\n";
    }
    return 0;
}

int cmd_wormhole(const std::string& topology, const std::string& id, const std::string& forwarder,
                 const std::string& captures, bool log_only) {
    const hmx::Topology topo = hmx::load_topology_file(topology);
    const hmx::WormholeSpec* spec = topo.find_wormhole(id);
    if (!spec) {
        std::cerr << "error: no wormhole '" << id << "' in " << topology << "\n";
        return 1;
    }
    hmx::WormholeOptions opt;
    opt.spec = *spec;
    opt.capture_dir = captures;
    opt.log_only = log_only;
    if (!log_only) {
        opt.forwarder_address = hmx::parse_host_port(forwarder);
    }
    hmx::WormholeAgent agent(std::move(opt));
    agent.start();
    hmx::log_info("cli", "wormhole '" + id + "' running" +
                             (log_only ? " (log-only)" : ", tunnel to " + forwarder));
    wait_for_signal();
    agent.stop();
    return 0;
}

int cmd_forwarder(const std::string& topology, const std::string& listen,
                  const std::string& log_file) {
    hmx::ForwarderOptions opt;
    opt.topology = hmx::load_topology_file(topology);
    const hmx::HostPort hp = hmx::parse_host_port(listen);
    opt.listen_host = hp.host;
    opt.listen_port = hp.port;
    opt.event_log = log_file;
    hmx::Forwarder fwd(std::move(opt));
    fwd.start();
    hmx::log_info("cli", "forwarder listening on " + hp.host + ":" + std::to_string(fwd.port()));
    wait_for_signal();
    fwd.stop();
    return 0;
}

int cmd_decoy(const std::string& profile, const std::string& host, int port,
              const std::string& log_file, const std::string& uploads, bool frame_cycling,
              double reset_interval) {
    hmx::DecoyDevice::Options opt;
    opt.profile_name = profile;
    opt.host = host;
    opt.port = static_cast<std::uint16_t>(port);
    opt.log_path = log_file;
    opt.upload_dir = uploads;
    opt.frame_cycling = frame_cycling;
    hmx::DecoyDevice decoy(std::move(opt));
    decoy.start();
    hmx::log_info("cli", "decoy '" + profile + "' serving on " + host + ":" +
                             std::to_string(decoy.port()));
    std::unique_ptr<hmx::ResetScheduler> scheduler;
    if (reset_interval > 0) {
        scheduler = std::make_unique<hmx::ResetScheduler>(
            std::vector<std::string>{profile},
            static_cast<hmx::Micros>(reset_interval * hmx::kMicrosPerSecond), nullptr,
            [&decoy](const std::string&) {
                decoy.reset();
                return true;
            });
    }
    wait_for_signal([&] {
        if (scheduler) {
            scheduler->poll();
        }
    });
    decoy.stop();
    return 0;
}

int cmd_simulate(const std::string& plan_file, const std::string& topology,
                 const std::string& captures, const std::string& manifest_file,
                 const std::string& geo_file, bool live, const std::string& labels,
                 double time_scale, int max_parallel) {
    const hmx::CampaignPlan plan = hmx::load_plan_file(plan_file);
    const hmx::Topology topo = hmx::load_topology_file(topology);
    const std::vector<hmx::PlannedConn> conns = hmx::expand_plan(plan, topo);

    std::optional<hmx::GeoTable> geo;
    if (!geo_file.empty()) {
        geo = hmx::GeoTable::load_csv(geo_file);
    }
    const auto manifest = hmx::build_manifest(plan, conns, topo, geo ? &*geo : nullptr);
    hmx::write_manifest(manifest, manifest_file);
    std::cout << "plan '" << plan.plan_id << "': " << conns.size()
              << " connections, manifest written to " << manifest_file << "\n";

    if (live) {
        hmx::LiveRunOptions opt;
        opt.topology = &topo;
        opt.time_scale = time_scale;
        opt.max_parallel = max_parallel;
        opt.labels_csv = labels;
        const hmx::LiveRunStats stats = hmx::run_campaign_live(conns, opt);
        std::cout << "live: " << stats.connections << " connections, " << stats.requests
                  << " requests, " << stats.status_mismatches << " status mismatches\n";
    } else {
        hmx::synthesize_captures(conns, topo, captures);
        std::cout << "synthetic captures written to " << captures << "\n";
    }
    return 0;
}

int cmd_analyze(const hmx::AnalyzeConfig& cfg) {
    const hmx::Analysis a = hmx::run_analysis(cfg);
    std::cout << "records=" << a.ingest.records.size()
              << " files_ok=" << a.ingest.files_ok
              << " files_rejected=" << a.ingest.rejected_files.size()
              << " sessions=" << a.sessions.size()
              << " flagged=" << a.bruteforce.flagged.size()
              << " successful=" << a.bruteforce.successful.size()
              << " distinct_ips=" << a.distinct_remote_ips << "\n";
    std::cout << "outputs in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_report(const std::string& analysis_dir, const std::string& out_dir) {
    const hmx::ReportResult res = hmx::write_report(analysis_dir, out_dir);
    for (const auto& name : res.rendered) {
        std::cout << "rendered " << name << "\n";
    }
    for (const auto& name : res.missing_input) {
        std::cout << "missing input for " << name << "\n";
    }
    return res.rendered.empty() ? 1 : 0;
}

int cmd_demo(const std::string& dir, std::uint64_t seed, int connections, int parallel) {
    hmx::DemoOptions opt;
    opt.work_dir = dir;
    opt.seed = seed;
    opt.min_connections = connections;
    opt.max_parallel = parallel;
    const hmx::DemoResult res = hmx::run_demo(opt);
    std::cout << "demo: " << res.connections_executed << " connections through "
              << res.mappings << " mappings in " << res.elapsed_seconds << "s\n";
    if (res.status_mismatches != 0) {
        std::cout << "warning: " << res.status_mismatches
                  << " responses differed from the plan\n";
    }
    std::cout << "manifest:  " << res.manifest_path << "\n";
    std::cout << "captures:  " << res.captures_dir << "\n";
    std::cout << "analysis:  " << res.analysis_dir << "\n";
    std::cout << "report:    " << res.report_dir << "\n";
    if (res.mismatches.empty()) {
        std::cout << "analysis matches the campaign manifest exactly\n";
        return 0;
    }
    std::cout << res.mismatches.size() << " mismatches:\n";
    for (const auto& m : res.mismatches) {
        std::cout << "  " << m << "\n";
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"honeymux: desk-scale distributed honeypot toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    // --- topo ---
    auto* topo = app.add_subcommand("topo", "Topology registry tools");
    topo->require_subcommand(1);
    std::string topo_file;
    auto* topo_validate = topo->add_subcommand("validate", "Validate a topology file");
    topo_validate->add_option("file", topo_file, "topology file")->required();
    topo_validate->callback([&] { rc = cmd_topo_validate(topo_file); });

    int tb_devices = 1, tb_wormholes = 1, tb_replication = 1, tb_base_port = 10000,
        tb_max_conn = 16;
    std::string tb_out;
    auto* topo_build = topo->add_subcommand("build", "Generate a round-robin topology");
    topo_build->add_option("--devices", tb_devices, "number of devices")->required();
    topo_build->add_option("--wormholes", tb_wormholes, "number of wormholes")->required();
    topo_build->add_option("--replication", tb_replication, "wormholes per device");
    topo_build->add_option("--base-port", tb_base_port, "first public port");
    topo_build->add_option("--max-conn", tb_max_conn, "per-device connection cap");
    topo_build->add_option("--out", tb_out, "write the topology here");
    topo_build->callback([&] {
        rc = cmd_topo_build(tb_devices, tb_wormholes, tb_replication, tb_base_port, tb_max_conn,
                            tb_out);
    });

    // --- wormhole ---
    std::string wh_topology, wh_id, wh_forwarder, wh_captures = "captures";
    bool wh_log_only = false;
    auto* wormhole = app.add_subcommand("wormhole", "Run a public listener agent");
    wormhole->add_option("--topology", wh_topology, "topology file")->required();
    wormhole->add_option("--id", wh_id, "wormhole id from the topology")->required();
    wormhole->add_option("--forwarder", wh_forwarder, "forwarder host:port");
    wormhole->add_option("--captures", wh_captures, "capture directory");
    wormhole->add_flag("--log-only", wh_log_only, "capture locally, never relay");
    wormhole->callback([&] {
        if (!wh_log_only && wh_forwarder.empty()) {
            throw CLI::ValidationError("--forwarder is required unless --log-only is set");
        }
        rc = cmd_wormhole(wh_topology, wh_id, wh_forwarder, wh_captures, wh_log_only);
    });

    // --- forwarder ---
    std::string fw_topology, fw_listen = "127.0.0.1:9000", fw_log = "forwarder.log";
    auto* forwarder = app.add_subcommand("forwarder", "Run the central relay");
    forwarder->add_option("--topology", fw_topology, "topology file")->required();
    forwarder->add_option("--listen", fw_listen, "listen address host:port");
    forwarder->add_option("--log", fw_log, "event log file");
    forwarder->callback([&] { rc = cmd_forwarder(fw_topology, fw_listen, fw_log); });

    // --- decoy ---
    std::string dc_profile, dc_host = "127.0.0.1", dc_log = "decoy.log", dc_uploads;
    int dc_port = 0;
    bool dc_cycling = false;
    double dc_reset_interval = 0.0;
    auto* decoy = app.add_subcommand("decoy", "Run an emulated device");
    decoy->add_option("--profile", dc_profile, "device profile")
        ->required()
        ->check(CLI::IsMember(hmx::decoy_profile_names()));
    decoy->add_option("--host", dc_host, "bind address");
    decoy->add_option("--port", dc_port, "bind port (0 = ephemeral)");
    decoy->add_option("--log", dc_log, "device event log");
    decoy->add_option("--uploads", dc_uploads, "firmware upload directory");
    decoy->add_flag("--frame-cycling", dc_cycling, "cycle stream frames (richer interaction)");
    decoy->add_option("--reset-interval", dc_reset_interval,
                      "seconds between factory resets (0 = never)");
    decoy->callback([&] {
        rc = cmd_decoy(dc_profile, dc_host, dc_port, dc_log, dc_uploads, dc_cycling,
                       dc_reset_interval);
    });

    // --- simulate ---
    std::string sim_plan, sim_topology, sim_captures = "sim-captures",
                sim_manifest = "manifest.json", sim_geo, sim_labels;
    bool sim_live = false;
    double sim_time_scale = 0.0;
    int sim_parallel = 8;
    auto* simulate = app.add_subcommand("simulate", "Run a seeded attack campaign");
    simulate->add_option("--plan", sim_plan, "campaign plan file")->required();
    simulate->add_option("--topology", sim_topology, "topology file")->required();
    simulate->add_option("--captures", sim_captures, "output captures (synthetic mode)");
    simulate->add_option("--manifest", sim_manifest, "ground-truth manifest output");
    simulate->add_option("--geo", sim_geo, "geolocation ranges CSV");
    simulate->add_flag("--live", sim_live, "drive real connections at a running deployment");
    simulate->add_option("--labels", sim_labels, "label map output (live mode)");
    simulate->add_option("--time-scale", sim_time_scale, "scale plan timing (0 = flat out)");
    simulate->add_option("--max-parallel", sim_parallel, "concurrent clients (live mode)");
    simulate->callback([&] {
        rc = cmd_simulate(sim_plan, sim_topology, sim_captures, sim_manifest, sim_geo, sim_live,
                          sim_labels, sim_time_scale, sim_parallel);
    });

    // --- analyze ---
    hmx::AnalyzeConfig an_cfg;
    std::string an_captures, an_topology, an_geo, an_listing, an_labels, an_out;
    auto* analyze = app.add_subcommand("analyze", "Ingest captures and compute the analytics");
    analyze->add_option("--captures", an_captures, "capture directory")->required();
    analyze->add_option("--topology", an_topology, "topology file");
    analyze->add_option("--geo", an_geo, "geolocation ranges CSV");
    analyze->add_option("--listing", an_listing, "listing events CSV");
    analyze->add_option("--labels", an_labels, "source label map CSV");
    analyze->add_option("--gap", an_cfg.gap_timeout_seconds, "session gap timeout (seconds)");
    analyze->add_option("--out", an_out, "output directory")->required();
    analyze->callback([&] {
        an_cfg.captures_dir = an_captures;
        an_cfg.topology_file = an_topology;
        an_cfg.geo_csv = an_geo;
        an_cfg.listing_csv = an_listing;
        an_cfg.labels_csv = an_labels;
        an_cfg.out_dir = an_out;
        rc = cmd_analyze(an_cfg);
    });

    // --- report ---
    std::string rp_analysis, rp_out;
    auto* report = app.add_subcommand("report", "Render tables from an analysis directory");
    report->add_option("--analysis", rp_analysis, "analysis output directory")->required();
    report->add_option("--out", rp_out, "report directory")->required();
    report->callback([&] { rc = cmd_report(rp_analysis, rp_out); });

    // --- demo ---
    std::string demo_dir = "demo-run";
    std::uint64_t demo_seed = 1;
    int demo_connections = 520, demo_parallel = 8;
    auto* demo = app.add_subcommand("demo", "Full loopback deployment with a seeded campaign");
    demo->add_option("--dir", demo_dir, "working directory");
    demo->add_option("--seed", demo_seed, "campaign seed");
    demo->add_option("--connections", demo_connections, "minimum campaign size");
    demo->add_option("--parallel", demo_parallel, "concurrent clients");
    demo->callback([&] { rc = cmd_demo(demo_dir, demo_seed, demo_connections, demo_parallel); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
