#pragma once

// Hand-built fixtures shared by the unit and acceptance tests.

#include "ptool/codec.hpp"
#include "ptool/model.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace ptool::testing {

/// Assistant reply for the wine-enthusiast registration example, as laid out
/// over several lines.
inline constexpr const char* kRegisterReply = R"({
  MegaMart:[
    registerUser(
      username='WineTraveler38', password='strongpassword123!',
      email='jeanlucbordeaux@email.com', preferredLanguage='French',
      marketingConsent=False, homeLocation='Paris, France'
    )
  ]
})";

inline Solution register_solution() {
    ToolCall c;
    c.platform = "MegaMart";
    c.function = "registerUser";
    c.args = {{"username", Value("WineTraveler38")},
              {"password", Value("strongpassword123!")},
              {"email", Value("jeanlucbordeaux@email.com")},
              {"preferredLanguage", Value("French")},
              {"marketingConsent", Value(false)},
              {"homeLocation", Value("Paris, France")}};
    return Solution{{c}};
}

inline ParamSpec param(std::string name, ParamKind kind, bool required,
                       std::optional<std::vector<std::string>> values = std::nullopt) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = kind;
    p.description = p.name;
    p.required = required;
    p.enum_values = std::move(values);
    if (kind == ParamKind::enumeration && !p.enum_values) p.enum_values = std::vector<std::string>{"a", "b"};
    return p;
}

/// Shopping registry: MegaMart and QuickShop, each with registerUser,
/// placeOrder and searchProducts.
inline Registry shop_registry() {
    Registry r;
    r.scenarios.push_back({"sc-shop", "shopping", "online stores"});
    r.platforms.push_back({"pl-mega", "sc-shop", "MegaMart", {{"product range", "A wide-ranging selection"}}});
    r.platforms.push_back({"pl-quick", "sc-shop", "QuickShop", {{"delivery speed", "same-day delivery"}}});
    for (const char* pid : {"pl-mega", "pl-quick"}) {
        ToolApi reg;
        reg.platform_id = pid;
        reg.name = "registerUser";
        reg.description = "Registers a new user in the application.";
        reg.params = {param("username", ParamKind::string, true),
                      param("password", ParamKind::string, true),
                      param("email", ParamKind::string, true),
                      param("preferredLanguage", ParamKind::string, false),
                      param("marketingConsent", ParamKind::boolean, false),
                      param("homeLocation", ParamKind::string, false)};
        reg.response_fields = {{"success", ParamKind::boolean, "Status of registration."}};
        r.apis.push_back(reg);

        ToolApi order;
        order.platform_id = pid;
        order.name = "placeOrder";
        order.description = "Buy an item";
        order.params = {param("item", ParamKind::string, true),
                        param("quantity", ParamKind::integer, true),
                        param("delivery", ParamKind::enumeration, false, std::vector<std::string>{"standard", "express"}),
                        param("giftWrap", ParamKind::boolean, false),
                        param("options", ParamKind::object, false),
                        param("tags", ParamKind::array, false)};
        r.apis.push_back(order);

        ToolApi search;
        search.platform_id = pid;
        search.name = "searchProducts";
        search.description = "Search the catalogue";
        search.params = {param("keyword", ParamKind::string, true), param("maxPrice", ParamKind::number, false)};
        r.apis.push_back(search);
    }
    return r;
}

inline UserProfile wine_profile() {
    UserProfile u;
    u.basic_features = {{"username", "WineTraveler38"},
                        {"password", "strongpassword123!"},
                        {"email", "jeanlucbordeaux@email.com"},
                        {"home location", "Paris, France"},
                        {"language", "French"}};
    u.implicit_features = {{"shopping preference", "premium imported wines"}, {"marketing", "avoids promotional mail"}};
    u.history["shopping"] = {{"MegaMart", "Purchased a selection of premium imported wines"}};
    u.user_id = profile_id(u);
    return u;
}

/// Gold sample for the registration example. No value appears verbatim in the
/// query, so every parameter is tagged as profile-derived.
inline Sample register_sample() {
    Sample s;
    s.user_id = wine_profile().user_id;
    s.scenario = "shopping";
    s.query = "Could you please register an account for me using my username, password and email address, and "
              "setting my home location to my place of residence? I prefer not to receive any marketing emails.";
    s.gold = register_solution();
    s.id = "s-register";
    for (const auto& [name, _] : s.gold.calls[0].args)
        s.provenance.tags[{0, name}] = Origin::profile;
    s.status = SampleStatus::model_verified;
    return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ptool_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

} // namespace ptool::testing
