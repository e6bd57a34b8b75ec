#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/serve.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <set>
#include <thread>

#include <sys/socket.h>

namespace coach {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct Server::Impl {
    std::shared_ptr<const ServeModel> model;
    CuePolicy policy;
    net::io_context ioc;
    std::optional<tcp::acceptor> acceptor;
    tcp::endpoint bound;
    std::thread accept_thread;
    std::atomic<bool> stopping{false};

    std::mutex mu;
    std::condition_variable cv;
    bool stopped = false;
    std::vector<std::thread> workers;
    std::set<int> open_fds;

    void track_fd(int fd, bool open) {
        std::lock_guard lock(mu);
        if (open)
            open_fds.insert(fd);
        else
            open_fds.erase(fd);
    }

    void serve_http(tcp::socket& sock, const http::request<http::string_body>& req) {
        http::response<http::string_body> res;
        res.version(req.version());
        res.keep_alive(false);
        res.set(http::field::content_type, "application/json");
        if (req.method() == http::verb::get && req.target() == "/healthz") {
            res.result(http::status::ok);
            res.body() = model->identity().dump();
        } else {
            res.result(http::status::not_found);
            res.body() = R"({"error":"not found"})";
        }
        res.prepare_payload();
        beast::error_code ec;
        http::write(sock, res, ec);
        sock.shutdown(tcp::socket::shutdown_send, ec);
    }

    void serve_ws(tcp::socket sock, const http::request<http::string_body>& req) {
        websocket::stream<tcp::socket> ws(std::move(sock));
        beast::error_code ec;
        ws.accept(req, ec);
        if (ec) return;
        ProtocolSession ps(model, policy);
        beast::flat_buffer buf;
        while (!ps.closed()) {
            buf.clear();
            ws.read(buf, ec);
            if (ec) return;  // client went away
            for (const auto& reply : ps.on_message(beast::buffers_to_string(buf.data()))) {
                ws.text(true);
                ws.write(net::buffer(reply), ec);
                if (ec) return;
            }
        }
        ws.close(websocket::close_code::normal, ec);
        // drain until the peer acknowledges the close
        while (!ec) {
            buf.clear();
            ws.read(buf, ec);
        }
    }

    void handle(tcp::socket sock) {
        const int fd = sock.native_handle();
        track_fd(fd, true);
        try {
            beast::flat_buffer buf;
            http::request<http::string_body> req;
            beast::error_code ec;
            http::read(sock, buf, req, ec);
            if (!ec) {
                if (websocket::is_upgrade(req))
                    serve_ws(std::move(sock), req);
                else
                    serve_http(sock, req);
            }
        } catch (const std::exception& e) {
            log_warn(std::string("connection ended: ") + e.what());
        }
        track_fd(fd, false);
    }

    void accept_loop() {
        while (!stopping) {
            tcp::socket sock(ioc);
            beast::error_code ec;
            acceptor->accept(sock, ec);
            if (stopping) break;
            if (ec) continue;
            std::lock_guard lock(mu);
            workers.emplace_back([this, s = std::move(sock)]() mutable { handle(std::move(s)); });
        }
    }
};

Server::Server(std::shared_ptr<const ServeModel> model, CuePolicy policy) : impl_(std::make_unique<Impl>()) {
    policy.validate();
    impl_->model = std::move(model);
    impl_->policy = policy;
}

Server::~Server() { stop(); }

unsigned short Server::start(unsigned short port, const std::string& address) {
    auto& im = *impl_;
    beast::error_code ec;
    const auto addr = net::ip::make_address(address, ec);
    if (ec) throw ConfigError("bad listen address '" + address + "'");
    im.acceptor.emplace(im.ioc);
    const tcp::endpoint ep(addr, port);
    im.acceptor->open(ep.protocol(), ec);
    if (!ec) im.acceptor->set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) im.acceptor->bind(ep, ec);
    if (!ec) im.acceptor->listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw ConfigError("cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
    im.bound = im.acceptor->local_endpoint();
    im.accept_thread = std::thread([&im] { im.accept_loop(); });
    return im.bound.port();
}

void Server::stop() {
    auto& im = *impl_;
    if (!im.accept_thread.joinable()) return;
    im.stopping = true;
    {
        // wake the blocking accept
        beast::error_code ec;
        tcp::socket poke(im.ioc);
        poke.connect(im.bound, ec);
    }
    im.accept_thread.join();
    beast::error_code ec;
    im.acceptor->close(ec);
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(im.mu);
        for (int fd : im.open_fds) ::shutdown(fd, SHUT_RDWR);
        workers.swap(im.workers);
    }
    for (auto& t : workers) t.join();
    {
        std::lock_guard lock(im.mu);
        im.stopped = true;
    }
    im.cv.notify_all();
}

void Server::wait() {
    auto& im = *impl_;
    std::unique_lock lock(im.mu);
    im.cv.wait(lock, [&] { return im.stopped; });
}

// ----------------------------------------------------------------- client

std::vector<std::string> ws_exchange(const std::string& host, unsigned short port,
                                     const std::vector<std::string>& messages) {
    net::io_context ioc;
    tcp::resolver resolver(ioc);
    websocket::stream<tcp::socket> ws(ioc);
    net::connect(ws.next_layer(), resolver.resolve(host, std::to_string(port)));
    ws.handshake(host + ":" + std::to_string(port), "/");
    ws.text(true);
    beast::error_code ec;
    for (const auto& m : messages) {
        ws.write(net::buffer(m), ec);
        if (ec) break;  // server refused the session
    }
    std::vector<std::string> replies;
    beast::flat_buffer buf;
    for (;;) {
        buf.clear();
        ws.read(buf, ec);
        if (ec) break;  // closed by the server
        replies.push_back(beast::buffers_to_string(buf.data()));
    }
    return replies;
}

std::pair<int, std::string> http_get(const std::string& host, unsigned short port, const std::string& target) {
    net::io_context ioc;
    tcp::resolver resolver(ioc);
    tcp::socket sock(ioc);
    net::connect(sock, resolver.resolve(host, std::to_string(port)));
    http::request<http::empty_body> req(http::verb::get, target, 11);
    req.set(http::field::host, host);
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    return {static_cast<int>(res.result_int()), res.body()};
}

}  // namespace coach
