#include "doctest.h"

#include <algorithm>
#include <map>

#include "generators.hpp"
#include "oracles.hpp"
#include "spotex/fingerprint.hpp"

using namespace spotex;

namespace {

NetworkObservation obs(std::string ssid, std::string mac, int rssi, Timestamp t,
                       NetworkKind kind = NetworkKind::Wifi) {
    return NetworkObservation(NetworkId(std::move(ssid), mac), kind, rssi, t);
}

Fingerprint fp_of(std::initializer_list<NetworkObservation> list) {
    Fingerprint fp;
    for (const auto& o : list) fp = merge_observation(std::move(fp), o);
    return fp;
}

}  // namespace

TEST_CASE("normalize_mac accepts the common spellings") {
    CHECK(normalize_mac("aa-bb-cc-dd-ee-ff") == "AA:BB:CC:DD:EE:FF");
    CHECK(normalize_mac("AA:BB:CC:DD:EE:FF") == "AA:BB:CC:DD:EE:FF");
    CHECK(normalize_mac("aabb.ccdd.eeff") == "AA:BB:CC:DD:EE:FF");
    CHECK(normalize_mac("aabbccddeeff") == "AA:BB:CC:DD:EE:FF");
}

TEST_CASE("normalize_mac rejects wrong digit counts and stray characters") {
    CHECK_THROWS_AS(normalize_mac("AA:BB:CC:DD:EE"), MalformedMac);
    CHECK_THROWS_AS(normalize_mac("AA:BB:CC:DD:EE:FF:00"), MalformedMac);
    CHECK_THROWS_AS(normalize_mac("AA:BB:CC:DD:EE:FG"), MalformedMac);
    CHECK_THROWS_AS(normalize_mac("AA BB CC DD EE FF"), MalformedMac);
    CHECK_THROWS_AS(normalize_mac(""), MalformedMac);
}

TEST_CASE("normalize_mac is idempotent and always canonical") {
    testing::Gen gen(7);
    const char* separators[] = {":", "-", "", "."};
    for (int i = 0; i < 300; ++i) {
        std::string mac = gen.mac();
        std::string digits;
        for (char c : mac)
            if (c != ':') digits.push_back(gen.coin() ? static_cast<char>(std::tolower(c)) : c);
        const char* sep = separators[gen.uniform(0, 3)];
        std::string raw;
        const std::size_t group = std::string(sep) == "." ? 4 : 2;
        for (std::size_t k = 0; k < digits.size(); k += group) {
            if (k) raw += sep;
            raw += digits.substr(k, group);
        }
        const std::string once = normalize_mac(raw);
        CHECK(is_canonical_mac(once));
        CHECK(once == mac);
        CHECK(normalize_mac(once) == once);
    }
}

TEST_CASE("observation invariants are enforced at construction") {
    CHECK_NOTHROW(obs("a", "AA:BB:CC:DD:EE:FF", -120, 0));
    CHECK_NOTHROW(obs("a", "AA:BB:CC:DD:EE:FF", 0, 0));
    CHECK_THROWS_AS(obs("a", "AA:BB:CC:DD:EE:FF", 1, 0), InvalidObservation);
    CHECK_THROWS_AS(obs("a", "AA:BB:CC:DD:EE:FF", -121, 0), InvalidObservation);
    CHECK_THROWS_AS(obs(std::string(33, 'x'), "AA:BB:CC:DD:EE:FF", -50, 0), InvalidObservation);
    CHECK_NOTHROW(obs(std::string(32, 'x'), "AA:BB:CC:DD:EE:FF", -50, 0));
    CHECK_THROWS_AS(obs("\xff\xfe", "AA:BB:CC:DD:EE:FF", -50, 0), InvalidObservation);
}

TEST_CASE("merge_observation keeps the newest observation per key") {
    const auto first = obs("Café", "AA:BB:CC:DD:EE:FF", -65, 100);
    Fingerprint fp = merge_observation({}, first);
    CHECK(fp.size() == 1);

    SUBCASE("newer replaces") {
        auto merged = merge_observation(fp, obs("Café", "AA:BB:CC:DD:EE:FF", -70, 200));
        REQUIRE(merged.size() == 1);
        CHECK(merged.begin()->second.rssi() == -70);
    }
    SUBCASE("older is ignored") {
        auto newer = merge_observation(fp, obs("Café", "AA:BB:CC:DD:EE:FF", -70, 200));
        auto after = merge_observation(newer, obs("Café", "AA:BB:CC:DD:EE:FF", -40, 100));
        CHECK(after == newer);
    }
    SUBCASE("same MAC with a different kind is a separate key") {
        auto both = merge_observation(fp, obs("Café", "AA:BB:CC:DD:EE:FF", -70, 50, NetworkKind::Bluetooth));
        CHECK(both.size() == 2);
    }
    SUBCASE("identical observation is idempotent") {
        CHECK(merge_observation(fp, first) == fp);
    }
}

TEST_CASE("merge_observation matches a brute-force last-write-wins replay") {
    testing::Gen gen(11);
    for (int round = 0; round < 200; ++round) {
        const std::vector<std::string> macs = {"00:00:00:00:00:01", "00:00:00:00:00:02", "00:00:00:00:00:03"};
        std::vector<NetworkObservation> sequence;
        std::vector<Timestamp> used;
        for (int i = 0; i < 12; ++i) {
            Timestamp t;
            do {
                t = gen.uniform(0, 1000);
            } while (std::find(used.begin(), used.end(), t) != used.end());
            used.push_back(t);
            sequence.push_back(obs("x", macs[static_cast<std::size_t>(gen.uniform(0, 2))], gen.uniform(-120, 0), t,
                                   gen.coin() ? NetworkKind::Wifi : NetworkKind::Bluetooth));
        }
        Fingerprint fp;
        for (const auto& o : sequence) fp = merge_observation(std::move(fp), o);

        std::map<std::pair<NetworkKind, std::string>, const NetworkObservation*> latest;
        for (const auto& o : sequence) {
            auto& slot = latest[{o.kind(), o.mac()}];
            if (!slot || o.observed_at() > slot->observed_at()) slot = &o;
        }
        REQUIRE(fp.size() == latest.size());
        for (const auto& [key, o] : latest) {
            const auto* stored = fp.find(key.first, key.second);
            REQUIRE(stored != nullptr);
            CHECK(stored->rssi() == o->rssi());
            CHECK(stored->observed_at() == o->observed_at());
        }
    }
}

TEST_CASE("prune_stale keeps observations within the TTL") {
    const auto a = obs("a", "00:00:00:00:00:0A", -50, 0);
    const auto b = obs("b", "00:00:00:00:00:0B", -50, 10000);
    CHECK(prune_stale(fp_of({a}), 10000, 15000) == fp_of({a}));
    CHECK(prune_stale(fp_of({a}), 20000, 15000).empty());
    CHECK(prune_stale(fp_of({a, b}), 20000, 15000) == fp_of({b}));
    CHECK(prune_stale(fp_of({a}), 15000, 15000) == fp_of({a}));  // boundary inclusive
    CHECK_THROWS(prune_stale(fp_of({a}), 0, 0));
}

TEST_CASE("prune_stale is idempotent") {
    testing::Gen gen(3);
    for (int i = 0; i < 100; ++i) {
        const auto fp = gen.fingerprint(20);
        const Timestamp now = std::uniform_int_distribution<Timestamp>(0, Timestamp{1} << 45)(gen.engine());
        const Timestamp ttl = gen.uniform(1, 1 << 30);
        const auto once = prune_stale(fp, now, ttl);
        CHECK(prune_stale(once, now, ttl) == once);
    }
}

TEST_CASE("visibility and strongest RSSI") {
    const auto cafe = fp_of({obs("Café", "AA:BB:CC:DD:EE:FF", -65, 0)});
    CHECK(is_visible(cafe, NetworkSelector::ssid("Café")));
    CHECK_FALSE(is_visible(cafe, NetworkSelector::ssid("café")));
    CHECK(is_visible(cafe, NetworkSelector::mac("aa-bb-cc-dd-ee-ff")));
    CHECK_FALSE(is_visible({}, NetworkSelector::ssid("Café")));
    CHECK(observed_rssi(cafe, NetworkSelector::ssid("Café")) == -65);
    CHECK_FALSE(observed_rssi({}, NetworkSelector::ssid("Café")).has_value());

    const std::vector<NetworkObservation> two = {obs("Café", "00:00:00:00:00:0A", -65, 0),
                                                 obs("Café", "00:00:00:00:00:0B", -80, 0)};
    const auto expected = testing::max_rssi_for_ssid(two, "Café");
    REQUIRE(expected == -65);
    CHECK(observed_rssi(fp_of({two[0], two[1]}), NetworkSelector::ssid("Café")) == expected);
}

TEST_CASE("hidden networks match by MAC only") {
    const auto hidden = fp_of({obs("", "00:00:00:00:00:01", -50, 0)});
    CHECK_FALSE(is_visible(hidden, NetworkSelector::ssid("")));
    CHECK(is_visible(hidden, NetworkSelector::mac("00:00:00:00:00:01")));
}

TEST_CASE("selectors match either kind") {
    const auto bt = fp_of({obs("Beacon", "00:00:00:00:00:01", -50, 0, NetworkKind::Bluetooth)});
    CHECK(is_visible(bt, NetworkSelector::ssid("Beacon")));
}

TEST_CASE("is_visible agrees with observed_rssi presence and the enumeration oracle") {
    testing::Gen gen(5);
    for (int i = 0; i < 200; ++i) {
        const auto fp = gen.fingerprint(15);
        const auto list = fp.observations();
        std::string name = list.empty() || gen.coin() ? gen.text(8) : list.front().ssid();
        const auto sel = NetworkSelector::ssid(name);
        CHECK(is_visible(fp, sel) == observed_rssi(fp, sel).has_value());
        CHECK(observed_rssi(fp, sel) == testing::max_rssi_for_ssid(list, name));
    }
}

TEST_CASE("canonical JSON uses wire field names in (kind, MAC) order") {
    const auto fp = fp_of({obs("Beacon", "00:00:00:00:00:01", -70, 5, NetworkKind::Bluetooth),
                           obs("Café", "AA:BB:CC:DD:EE:FF", -65, 7), obs("Lobby", "11:22:33:44:55:66", -80, 9)});
    CHECK(to_canonical_json(fp) ==
          R"([{"SSID":"Lobby","MAC":"11:22:33:44:55:66","RSSI":-80,"kind":"wifi","ts":9},)"
          R"({"SSID":"Café","MAC":"AA:BB:CC:DD:EE:FF","RSSI":-65,"kind":"wifi","ts":7},)"
          R"({"SSID":"Beacon","MAC":"00:00:00:00:00:01","RSSI":-70,"kind":"bluetooth","ts":5}])");
    CHECK(to_canonical_json({}) == "[]");
}

TEST_CASE("canonical JSON is independent of insertion order and round-trips") {
    testing::Gen gen(9);
    for (int i = 0; i < 100; ++i) {
        const auto fp = gen.fingerprint(20);
        auto list = fp.observations();
        std::shuffle(list.begin(), list.end(), gen.engine());
        Fingerprint shuffled;
        for (const auto& o : list) shuffled = merge_observation(std::move(shuffled), o);
        CHECK(to_canonical_json(shuffled) == to_canonical_json(fp));
        CHECK(fingerprint_from_json(to_canonical_json(fp), 0) == fp);
    }
}

TEST_CASE("fingerprint JSON parsing defaults and errors") {
    const auto fp = fingerprint_from_json(R"([{"SSID":"Café","MAC":"aa-bb-cc-dd-ee-ff","RSSI":-65}])", 42);
    REQUIRE(fp.size() == 1);
    const auto& o = fp.begin()->second;
    CHECK(o.mac() == "AA:BB:CC:DD:EE:FF");
    CHECK(o.kind() == NetworkKind::Wifi);
    CHECK(o.observed_at() == 42);

    CHECK_THROWS_AS(fingerprint_from_json("{", 0), FingerprintFormatError);
    CHECK_THROWS_AS(fingerprint_from_json("{}", 0), FingerprintFormatError);
    CHECK_THROWS_AS(fingerprint_from_json(R"([{"SSID":"a","MAC":"AA:BB:CC:DD:EE:FF"}])", 0), FingerprintFormatError);
    CHECK_THROWS_AS(fingerprint_from_json(R"([{"SSID":"a","MAC":"AA:BB:CC:DD:EE:FF","RSSI":10}])", 0),
                    InvalidObservation);
    CHECK_THROWS_AS(fingerprint_from_json(R"([{"SSID":"a","MAC":"AA:BB","RSSI":-10}])", 0), MalformedMac);
    CHECK_THROWS_AS(fingerprint_from_json(R"([{"SSID":"a","MAC":"AA:BB:CC:DD:EE:FF","RSSI":-10,"kind":"lte"}])", 0),
                    FingerprintFormatError);
}
