#include "spotex/venue.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace spotex::sim {

namespace {

using nlohmann::json;

const json* member(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double number_or(const json& obj, const char* key, double fallback, bool required = false) {
    const json* v = member(obj, key);
    if (!v) {
        if (required) throw VenueFormatError(std::string("missing \"") + key + "\"");
        return fallback;
    }
    if (!v->is_number()) throw VenueFormatError(std::string("\"") + key + "\" must be a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw VenueFormatError(std::string("\"") + key + "\" must be finite");
    return d;
}

int integer_or(const json& obj, const char* key, int fallback, bool required = false) {
    const json* v = member(obj, key);
    if (!v) {
        if (required) throw VenueFormatError(std::string("missing \"") + key + "\"");
        return fallback;
    }
    if (!v->is_number_integer()) throw VenueFormatError(std::string("\"") + key + "\" must be an integer");
    const auto i = v->get<std::int64_t>();
    if (i < -100000 || i > 100000) throw VenueFormatError(std::string("\"") + key + "\" out of range");
    return static_cast<int>(i);
}

std::string string_or(const json& obj, const char* key, std::string fallback, bool required = false) {
    const json* v = member(obj, key);
    if (!v) {
        if (required) throw VenueFormatError(std::string("missing \"") + key + "\"");
        return fallback;
    }
    if (!v->is_string()) throw VenueFormatError(std::string("\"") + key + "\" must be a string");
    return v->get<std::string>();
}

DevicePoint point_from(const json& obj) {
    DevicePoint p;
    p.x = number_or(obj, "x", 0.0, true);
    p.y = number_or(obj, "y", 0.0, true);
    p.floor = integer_or(obj, "floor", 0);
    return p;
}

std::uint64_t noise_seed(std::uint64_t seed, std::string_view venue, std::string_view mac, Timestamp now) {
    std::vector<std::uint32_t> material;
    material.push_back(static_cast<std::uint32_t>(seed));
    material.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (char c : venue) material.push_back(static_cast<unsigned char>(c));
    material.push_back(0xFFFFFFFFu);
    for (char c : mac) material.push_back(static_cast<unsigned char>(c));
    const auto t = static_cast<std::uint64_t>(now);
    material.push_back(static_cast<std::uint32_t>(t));
    material.push_back(static_cast<std::uint32_t>(t >> 32));
    std::seed_seq seq(material.begin(), material.end());
    std::uint32_t words[2];
    seq.generate(std::begin(words), std::end(words));
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

void validate_venue(const Venue& venue) {
    const auto& p = venue.params;
    if (p.exponent_n < 1.5 || p.exponent_n > 6.0)
        throw VenueFormatError("exponent_n must be within [1.5, 6.0]");
    if (p.detection_threshold_dbm < -120 || p.detection_threshold_dbm > -40)
        throw VenueFormatError("detection_threshold_dbm must be within [-120, -40]");
    if (!(p.noise_sigma_db >= 0.0)) throw VenueFormatError("noise_sigma_db must be >= 0");
    if (!(p.floor_attenuation_db >= 0.0)) throw VenueFormatError("floor_attenuation_db must be >= 0");
    if (!(p.floor_height_m > 0.0)) throw VenueFormatError("floor_height_m must be > 0");

    std::set<std::pair<NetworkKind, std::string>> keys;
    for (const auto& ap : venue.aps) {
        if (ap.tx_ref_dbm < -60 || ap.tx_ref_dbm > -20)
            throw VenueFormatError("AP " + ap.id.mac() + ": tx_ref_dbm must be within [-60, -20]");
        if (ap.position.floor < 0 || ap.position.floor > kMaxFloor)
            throw VenueFormatError("AP " + ap.id.mac() + ": floor must be within [0, 63]");
        if (!std::isfinite(ap.position.x) || !std::isfinite(ap.position.y))
            throw VenueFormatError("AP " + ap.id.mac() + ": coordinates must be finite");
        if (!keys.emplace(ap.kind, ap.id.mac()).second)
            throw DuplicateAp("duplicate AP " + ap.id.mac() + " (" + std::string(to_string(ap.kind)) + ")");
    }
}

Venue load_venue(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw VenueFormatError(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw VenueFormatError("venue must be a JSON object");

    Venue venue;
    venue.name = string_or(doc, "name", "", true);

    if (const json* params = member(doc, "params")) {
        if (!params->is_object()) throw VenueFormatError("\"params\" must be an object");
        PathLossParams defaults;
        venue.params.exponent_n = number_or(*params, "exponent_n", defaults.exponent_n);
        venue.params.floor_attenuation_db =
            number_or(*params, "floor_attenuation_db", defaults.floor_attenuation_db);
        venue.params.floor_height_m = number_or(*params, "floor_height_m", defaults.floor_height_m);
        venue.params.detection_threshold_dbm =
            integer_or(*params, "detection_threshold_dbm", defaults.detection_threshold_dbm);
        venue.params.noise_sigma_db = number_or(*params, "noise_sigma_db", defaults.noise_sigma_db);
    }

    const json* aps = member(doc, "aps");
    if (!aps || !aps->is_array()) throw VenueFormatError("\"aps\" must be an array");
    for (const auto& item : *aps) {
        if (!item.is_object()) throw VenueFormatError("each AP must be an object");
        const auto kind = parse_network_kind(string_or(item, "kind", "wifi"));
        if (!kind) throw VenueFormatError("AP kind must be \"wifi\" or \"bluetooth\"");
        try {
            venue.aps.push_back(AccessPointPlacement{
                NetworkId(string_or(item, "ssid", ""), string_or(item, "mac", "", true)), *kind,
                point_from(item), integer_or(item, "tx_ref_dbm", -40)});
        } catch (const InvalidObservation& e) {
            throw VenueFormatError(e.what());
        }
    }
    validate_venue(venue);
    return venue;
}

std::string venue_to_json(const Venue& venue) {
    nlohmann::ordered_json doc;
    doc["name"] = venue.name;
    doc["params"] = {{"exponent_n", venue.params.exponent_n},
                     {"floor_attenuation_db", venue.params.floor_attenuation_db},
                     {"floor_height_m", venue.params.floor_height_m},
                     {"detection_threshold_dbm", venue.params.detection_threshold_dbm},
                     {"noise_sigma_db", venue.params.noise_sigma_db}};
    doc["aps"] = nlohmann::ordered_json::array();
    for (const auto& ap : venue.aps) {
        doc["aps"].push_back({{"ssid", ap.id.ssid()},
                              {"mac", ap.id.mac()},
                              {"kind", to_string(ap.kind)},
                              {"x", ap.position.x},
                              {"y", ap.position.y},
                              {"floor", ap.position.floor},
                              {"tx_ref_dbm", ap.tx_ref_dbm}});
    }
    return doc.dump();
}

double predict_rssi(const AccessPointPlacement& ap, const DevicePoint& p, const PathLossParams& params) {
    const int floors = std::abs(ap.position.floor - p.floor);
    const double dx = ap.position.x - p.x;
    const double dy = ap.position.y - p.y;
    const double dz = floors * params.floor_height_m;
    const double d = std::max(std::sqrt(dx * dx + dy * dy + dz * dz), 1.0);
    return ap.tx_ref_dbm - 10.0 * params.exponent_n * std::log10(d) - params.floor_attenuation_db * floors;
}

Fingerprint scan(const Venue& venue, const DevicePoint& p, Timestamp now, std::uint64_t seed) {
    Fingerprint fp;
    for (const auto& ap : venue.aps) {
        double level = predict_rssi(ap, p, venue.params);
        if (venue.params.noise_sigma_db > 0.0) {
            std::mt19937_64 gen(noise_seed(seed, venue.name, ap.id.mac(), now));
            std::normal_distribution<double> noise(0.0, venue.params.noise_sigma_db);
            level += noise(gen);
        }
        const long rounded = std::lround(level);
        if (rounded < venue.params.detection_threshold_dbm) continue;
        const int rssi = static_cast<int>(std::clamp<long>(rounded, kMinRssiDbm, kMaxRssiDbm));
        fp = merge_observation(std::move(fp), NetworkObservation(ap.id, ap.kind, rssi, now));
    }
    return fp;
}

std::vector<Fingerprint> walk(const Venue& venue, const std::vector<PathStep>& path, std::uint64_t seed) {
    std::vector<Fingerprint> out;
    out.reserve(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i > 0 && path[i].t <= path[i - 1].t)
            throw NonMonotonicPath("path timestamps must strictly increase (step " + std::to_string(i) + ")");
        out.push_back(scan(venue, path[i].point, path[i].t, seed));
    }
    return out;
}

std::vector<PathStep> load_path(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw VenueFormatError(std::string("invalid path JSON: ") + e.what());
    }
    if (!doc.is_array()) throw VenueFormatError("path must be a JSON array");
    std::vector<PathStep> path;
    for (const auto& item : doc) {
        if (!item.is_object()) throw VenueFormatError("path step must be an object");
        const json* t = member(item, "t");
        if (!t || !t->is_number_integer()) throw VenueFormatError("path step needs integer \"t\"");
        DevicePoint point = point_from(item);
        if (point.floor < 0 || point.floor > kMaxFloor) throw VenueFormatError("floor must be within [0, 63]");
        path.push_back({point, t->get<Timestamp>()});
    }
    return path;
}

}  // namespace spotex::sim
