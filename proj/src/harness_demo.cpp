#include "hmx/harness.hpp"

#include "hmx/decoy.hpp"
#include "hmx/forwarder.hpp"
#include "hmx/log.hpp"
#include "hmx/wormhole.hpp"

#include <chrono>
#include <fstream>
#include <thread>

namespace hmx {

namespace {

// 2016-06-01T00:00:00Z, the origin of all synthetic demo timestamps.
constexpr Micros kDemoBase = 1'464'739'200LL * kMicrosPerSecond;

struct WormholeSeed {
    const char* id;
    const char* addr;
    const char* city;
    const char* country;
};

constexpr WormholeSeed kDemoWormholes[] = {
    {"wh-fra", "127.0.0.2", "Frankfurt", "DE"},
    {"wh-ams", "127.0.0.3", "Amsterdam", "NL"},
    {"wh-lon", "127.0.0.4", "London", "GB"},
    {"wh-sfo", "127.0.0.5", "San Francisco", "US"},
    {"wh-sin", "127.0.0.6", "Singapore", "SG"},
};

} // namespace

Topology demo_topology(std::uint16_t cam_port, std::uint16_t printer_port) {
    const DecoyProfile& cam = decoy_profile("trendnet-cam");
    const DecoyProfile& printer = decoy_profile("hp-printer");
    Topology topo;
    topo.max_connections_per_device = 64;
    topo.devices.push_back({"cam-01", cam.model, {"127.0.0.1", cam_port}, cam.credential,
                            cam.difficulty, ServiceProtocol::Http});
    topo.devices.push_back({"printer-01", printer.model, {"127.0.0.1", printer_port},
                            printer.credential, printer.difficulty, ServiceProtocol::Http});
    for (const WormholeSeed& w : kDemoWormholes) {
        topo.wormholes.push_back(
            {w.id, w.addr, w.city, w.country, "lab-loop", {8080, 8081}});
        topo.mappings.push_back({w.id, 8080, "cam-01", cam_port});
        topo.mappings.push_back({w.id, 8081, "printer-01", printer_port});
    }
    validate_topology(topo);
    return topo;
}

std::string demo_geo_csv() {
    return "# lo,hi,country,city\n"
           "192.0.2.0,192.0.2.255,CN,Shenzhen\n"
           "203.0.113.0,203.0.113.255,US,Dallas\n"
           "198.51.100.0,198.51.100.255,RU,Moscow\n"
           "100.64.1.0,100.64.1.255,BR,Sao Paulo\n"
           "100.64.2.0,100.64.2.255,VN,Hanoi\n"
           "172.16.5.0,172.16.5.255,DE,Berlin\n"
           "172.16.6.0,172.16.6.255,TW,Taipei\n";
}

CampaignPlan demo_plan(std::uint64_t seed, int min_connections) {
    CampaignPlan plan;
    plan.plan_id = "loopback-demo";
    plan.seed = seed;
    plan.base_ts = kDemoBase;
    plan.jitter_seconds = 0.0;
    plan.repeat_spacing_seconds = 0.05;

    plan.scripts.push_back({"s-scan", Behavior::PortScan, "192.0.2.10", {}, "", 0.0, 11});
    plan.scripts.push_back({"s-probe", Behavior::HttpProbe, "203.0.113.10", {}, "", 0.0, 22});
    plan.scripts.push_back(
        {"s-bounce", Behavior::LowInteractionBounce, "198.51.100.10", {}, "", 0.0, 33});
    plan.scripts.push_back({"s-brute-fail",
                            Behavior::Bruteforce,
                            "100.64.1.10",
                            {{"root", "xc3511"},
                             {"root", "vizxv"},
                             {"admin", "admin1234"},
                             {"root", "888888"},
                             {"support", "support"},
                             {"root", "54321"}},
                            "",
                            0.0,
                            44});
    plan.scripts.push_back({"s-brute-win",
                            Behavior::Bruteforce,
                            "100.64.2.10",
                            {{"root", "xc3511"},
                             {"root", "vizxv"},
                             {"root", "888888"},
                             {"support", "support"},
                             {"admin", "admin"},
                             {"admin", "1234567890"}},
                            "",
                            0.0,
                            55});
    plan.scripts.push_back(
        {"s-browse-cam", Behavior::CuriousBrowser, "172.16.5.10", {{"admin", "admin"}}, "", 0.0,
         66});
    plan.scripts.push_back({"s-browse-prn",
                            Behavior::CuriousBrowser,
                            "172.16.6.10",
                            {{"admin", "1234567890"}},
                            "",
                            0.0,
                            77});

    // Volume entries scale with k until the campaign reaches the requested
    // size; the credentialed scripts stay fixed so their session counts are
    // easy to reason about.
    const int fixed_per_wormhole = 2 + 2 + 1 + 4 + 3;
    const int volume_base = 10 + 6 + 14 + 10 + 10 + 6;
    int k = 1;
    while (5 * (volume_base * k + fixed_per_wormhole) < min_connections) {
        ++k;
    }

    double offset = 0.0;
    for (const WormholeSeed& w : kDemoWormholes) {
        const auto add = [&](const char* script, std::uint16_t port, int repeat,
                             bool vary) {
            plan.entries.push_back({script, w.id, port, offset, repeat, vary});
            offset += 0.2;
        };
        add("s-scan", 8080, 10 * k, true);
        add("s-scan", 8081, 6 * k, true);
        add("s-probe", 8080, 14 * k, true);
        add("s-probe", 8081, 10 * k, true);
        add("s-bounce", 8080, 10 * k, true);
        add("s-bounce", 8081, 6 * k, true);
        add("s-brute-fail", 8080, 2, false);
        add("s-brute-win", 8080, 2, false);
        add("s-brute-win", 8081, 1, false);
        add("s-browse-cam", 8080, 4, true);
        add("s-browse-prn", 8081, 3, true);
    }
    return plan;
}

DemoResult run_demo(const DemoOptions& opt) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();

    fs::create_directories(opt.work_dir);
    const fs::path captures = opt.work_dir / "captures";
    fs::create_directories(captures);
    for (const auto& entry : fs::directory_iterator(captures)) {
        if (entry.path().extension() == ".pcap") {
            fs::remove(entry.path()); // stale captures from a previous run
        }
    }
    const fs::path geo_path = opt.work_dir / "geo.csv";
    {
        std::ofstream out(geo_path, std::ios::trunc);
        out << demo_geo_csv();
    }

    DecoyDevice cam({"trendnet-cam", "127.0.0.1", 0, opt.work_dir / "decoy-cam.log",
                     opt.work_dir / "cam-uploads", false, nullptr});
    cam.start();
    DecoyDevice printer({"hp-printer", "127.0.0.1", 0, opt.work_dir / "decoy-printer.log",
                         opt.work_dir / "printer-uploads", false, nullptr});
    printer.start();

    Topology topo = demo_topology(cam.port(), printer.port());
    const fs::path topo_path = opt.work_dir / "topology.cfg";
    save_topology_file(topo, topo_path);

    ForwarderOptions fo;
    fo.topology = topo;
    fo.listen_host = "127.0.0.1";
    fo.listen_port = 0;
    fo.event_log = opt.work_dir / "forwarder.log";
    Forwarder forwarder(fo);
    forwarder.start();

    std::vector<std::unique_ptr<WormholeAgent>> agents;
    for (const WormholeSpec& w : topo.wormholes) {
        WormholeOptions wo;
        wo.spec = w;
        wo.forwarder_address = {"127.0.0.1", forwarder.port()};
        wo.capture_dir = captures;
        agents.push_back(std::make_unique<WormholeAgent>(std::move(wo)));
        agents.back()->start();
    }
    for (const auto& agent : agents) {
        if (!agent->wait_tunnel_up(8000)) {
            throw std::runtime_error("demo: a wormhole tunnel failed to come up");
        }
    }

    const CampaignPlan plan = demo_plan(opt.seed, opt.min_connections);
    {
        std::ofstream out(opt.work_dir / "plan.cfg", std::ios::trunc);
        out << serialize_plan(plan);
    }
    const std::vector<PlannedConn> conns = expand_plan(plan, topo);
    const GeoTable geo = GeoTable::load_csv(geo_path);
    const nlohmann::ordered_json manifest = build_manifest(plan, conns, topo, &geo);
    const fs::path manifest_path = opt.work_dir / "manifest.json";
    write_manifest(manifest, manifest_path);

    LiveRunOptions lo;
    lo.topology = &topo;
    lo.max_parallel = opt.max_parallel;
    lo.labels_csv = opt.work_dir / "labels.csv";
    const LiveRunStats stats = run_campaign_live(conns, lo);

    // Let the final close handshakes drain into the captures before stopping.
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    for (const auto& agent : agents) {
        agent->stop();
    }
    forwarder.stop();
    printer.stop();
    cam.stop();

    AnalyzeConfig ac;
    ac.captures_dir = captures;
    ac.topology_file = topo_path;
    ac.geo_csv = geo_path;
    ac.labels_csv = opt.work_dir / "labels.csv";
    ac.out_dir = opt.work_dir / "analysis";
    const Analysis analysis = run_analysis(ac);

    DemoResult res;
    res.topology_file = topo_path;
    res.captures_dir = captures;
    res.analysis_dir = ac.out_dir;
    res.report_dir = opt.work_dir / "report";
    res.manifest_path = manifest_path;
    res.mappings = topo.mappings.size();
    res.connections_executed = stats.connections;
    res.status_mismatches = stats.status_mismatches;
    res.mismatches = compare_manifest(manifest, analysis);
    write_report(ac.out_dir, res.report_dir);
    res.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!opt.quiet) {
        log_info("demo", "campaign of " + std::to_string(stats.connections) + " connections, " +
                             std::to_string(res.mappings) + " mappings, " +
                             (res.mismatches.empty() ? "analysis matches the manifest"
                                                     : std::to_string(res.mismatches.size()) +
                                                           " manifest mismatches") +
                             ", " + std::to_string(res.elapsed_seconds) + "s");
    }
    return res;
}

} // namespace hmx
