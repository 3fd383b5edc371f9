//! Seeded synthetic corpus. Benign apps draw permissions from the benign
//! profile; malicious apps draw the same background plus the malicious
//! profile, and a configured share is forced to match one Kirin rule.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bundle, BundleError, Label};
use crate::detectors::{kirin_classify, CALL_ACTION, KIRIN_RULES};
use crate::manifest::{
    Application, Component, ComponentKind, ManifestDoc, Node, PermissionName, PermissionRequest,
};
use crate::smali::{parse_smali, SmaliProgram};

const BASE_TIMESTAMP: i64 = 1_400_000_000;
const DAY: i64 = 86_400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyProfile {
    pub permissions: Vec<String>,
    pub probability: f64,
}

impl FamilyProfile {
    fn new(perms: &[&str], probability: f64) -> Self {
        FamilyProfile {
            permissions: perms.iter().map(|p| full_name(p)).collect(),
            probability,
        }
    }
}

fn full_name(p: &str) -> String {
    if p.contains('.') {
        p.to_string()
    } else {
        format!("android.permission.{p}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_benign: usize,
    pub n_malicious: usize,
    pub permission_pool: Vec<String>,
    pub benign_family_profile: Vec<FamilyProfile>,
    pub malicious_family_profile: Vec<FamilyProfile>,
    pub kirin_trigger_rate: f64,
    pub suspicious_api_rate: f64,
    pub url_rate: f64,
    pub seed: u64,
}

/// Permission sets that each trigger exactly one Kirin rule, by rule id.
pub fn kirin_combos() -> Vec<(u8, Vec<String>)> {
    KIRIN_RULES
        .iter()
        .map(|r| (r.id, r.permissions.iter().map(|p| p.to_string()).collect()))
        .collect()
}

fn default_benign_profile() -> Vec<FamilyProfile> {
    vec![
        FamilyProfile::new(&["INTERNET", "ACCESS_NETWORK_STATE"], 0.78),
        FamilyProfile::new(&["INTERNET"], 0.12),
        FamilyProfile::new(&["WAKE_LOCK"], 0.30),
        FamilyProfile::new(&["VIBRATE"], 0.25),
        FamilyProfile::new(&["ACCESS_WIFI_STATE"], 0.18),
        FamilyProfile::new(&["WRITE_EXTERNAL_STORAGE"], 0.22),
        FamilyProfile::new(&["CAMERA"], 0.08),
        FamilyProfile::new(&["ACCESS_COARSE_LOCATION"], 0.08),
        FamilyProfile::new(&["GET_ACCOUNTS"], 0.06),
        FamilyProfile::new(&["BLUETOOTH"], 0.04),
        FamilyProfile::new(&["SET_WALLPAPER"], 0.03),
    ]
}

fn default_malicious_profile() -> Vec<FamilyProfile> {
    vec![
        FamilyProfile::new(&["READ_PHONE_STATE"], 0.65),
        FamilyProfile::new(&["RECEIVE_SMS", "READ_SMS"], 0.35),
        FamilyProfile::new(&["SEND_SMS"], 0.35),
        FamilyProfile::new(&["READ_CONTACTS"], 0.25),
        FamilyProfile::new(&["ACCESS_FINE_LOCATION"], 0.25),
        FamilyProfile::new(&["CHANGE_WIFI_STATE"], 0.2),
        FamilyProfile::new(&["GET_TASKS"], 0.2),
        FamilyProfile::new(&["SYSTEM_ALERT_WINDOW"], 0.15),
        FamilyProfile::new(&["READ_CALL_LOG"], 0.1),
        FamilyProfile::new(&["MOUNT_UNMOUNT_FILESYSTEMS"], 0.1),
    ]
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let benign = default_benign_profile();
        let malicious = default_malicious_profile();
        let mut pool: Vec<String> = benign
            .iter()
            .chain(&malicious)
            .flat_map(|f| f.permissions.iter().cloned())
            .chain(kirin_combos().into_iter().flat_map(|(_, p)| p))
            .collect();
        pool.sort();
        pool.dedup();
        CorpusSpec {
            n_benign: 900,
            n_malicious: 100,
            permission_pool: pool,
            benign_family_profile: benign,
            malicious_family_profile: malicious,
            kirin_trigger_rate: 1.0,
            suspicious_api_rate: 0.5,
            url_rate: 0.4,
            seed: 1,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), BundleError> {
        let bad = |m: String| Err(BundleError::InvalidSpec(m));
        if self.n_benign == 0 || self.n_malicious == 0 {
            return bad(format!(
                "need both labels (n_benign={}, n_malicious={})",
                self.n_benign, self.n_malicious
            ));
        }
        for (name, p) in [
            ("kirin_trigger_rate", self.kirin_trigger_rate),
            ("suspicious_api_rate", self.suspicious_api_rate),
            ("url_rate", self.url_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name}={p} outside [0,1]"));
            }
        }
        for f in self
            .benign_family_profile
            .iter()
            .chain(&self.malicious_family_profile)
        {
            if !(0.0..=1.0).contains(&f.probability) {
                return bad(format!(
                    "family probability {} outside [0,1]",
                    f.probability
                ));
            }
            if let Some(p) = f
                .permissions
                .iter()
                .find(|p| !self.permission_pool.contains(p))
            {
                return bad(format!("{p} not in permission_pool"));
            }
        }
        if self.kirin_trigger_rate > 0.0 {
            for (id, perms) in kirin_combos() {
                if let Some(p) = perms.iter().find(|p| !self.permission_pool.contains(p)) {
                    return bad(format!(
                        "rule {id} needs {p}, which is not in permission_pool"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_forced(&self) -> usize {
        (self.kirin_trigger_rate * self.n_malicious as f64).round() as usize
    }
}

struct Api {
    class: &'static str,
    method: &'static str,
    params: &'static [&'static str],
    ret: &'static str,
    service: &'static str,
}

const fn api(
    class: &'static str,
    method: &'static str,
    params: &'static [&'static str],
    ret: &'static str,
    service: &'static str,
) -> Api {
    Api {
        class,
        method,
        params,
        ret,
        service,
    }
}

const STR: &str = "Ljava/lang/String;";

const MALICIOUS_APIS: &[Api] = &[
    api(
        "Landroid/telephony/SmsManager;",
        "sendTextMessage",
        &[
            STR,
            STR,
            STR,
            "Landroid/app/PendingIntent;",
            "Landroid/app/PendingIntent;",
        ],
        "V",
        "sms",
    ),
    api(
        "Landroid/telephony/TelephonyManager;",
        "getDeviceId",
        &[],
        STR,
        "phone",
    ),
    api(
        "Landroid/telephony/TelephonyManager;",
        "getSubscriberId",
        &[],
        STR,
        "phone",
    ),
    api(
        "Landroid/telephony/TelephonyManager;",
        "getLine1Number",
        &[],
        STR,
        "phone",
    ),
    api(
        "Ljava/lang/Runtime;",
        "exec",
        &[STR],
        "Ljava/lang/Process;",
        "runtime",
    ),
    api(
        "Landroid/net/wifi/WifiManager;",
        "setWifiEnabled",
        &["Z"],
        "Z",
        "wifi",
    ),
    api(
        "Landroid/content/BroadcastReceiver;",
        "abortBroadcast",
        &[],
        "V",
        "receiver",
    ),
    api(
        "Landroid/accounts/AccountManager;",
        "getAccounts",
        &[],
        "[Landroid/accounts/Account;",
        "account",
    ),
    api(
        "Landroid/content/pm/PackageManager;",
        "getInstalledPackages",
        &["I"],
        "Ljava/util/List;",
        "package",
    ),
    api(
        "Landroid/media/MediaRecorder;",
        "setAudioSource",
        &["I"],
        "V",
        "recorder",
    ),
];

const BENIGN_APIS: &[Api] = &[
    api(
        "Landroid/net/ConnectivityManager;",
        "getActiveNetworkInfo",
        &[],
        "Landroid/net/NetworkInfo;",
        "connectivity",
    ),
    api(
        "Ljava/net/URL;",
        "openConnection",
        &[],
        "Ljava/net/URLConnection;",
        "url",
    ),
    api("Landroid/os/Vibrator;", "vibrate", &["J"], "V", "vibrator"),
    api(
        "Landroid/os/PowerManager;",
        "newWakeLock",
        &["I", STR],
        "Landroid/os/PowerManager$WakeLock;",
        "power",
    ),
    api(
        "Landroid/net/wifi/WifiManager;",
        "getConnectionInfo",
        &[],
        "Landroid/net/wifi/WifiInfo;",
        "wifi",
    ),
];

const MALICIOUS_URLS: &[&str] = &[
    "http://abc.com",
    "http://update-check.net/gate.php",
    "http://100.50.43.22:8080/c",
    "100.50.43.22",
    "http://cdn-push.biz/a/b",
    "http://sms-billing.ru/api",
];

const BENIGN_URLS: &[&str] = &[
    "https://www.google-analytics.com/collect",
    "https://api.example.org/v1/items",
    "https://cdn.example.org/img",
    "http://schemas.android.com/apk/res/android",
];

/// Small smali method builder that hands out fresh registers.
struct MethodBody {
    lines: Vec<String>,
    next: usize,
}

impl MethodBody {
    fn new() -> Self {
        MethodBody {
            lines: Vec::new(),
            next: 0,
        }
    }

    fn reg(&mut self, wide: bool) -> usize {
        let r = self.next;
        self.next += if wide { 2 } else { 1 };
        r
    }

    fn string(&mut self, literal: &str) -> usize {
        let r = self.reg(false);
        self.lines.push(format!("const-string v{r}, \"{literal}\""));
        r
    }

    fn call(&mut self, class_desc: &str, a: &Api) {
        let svc = self.string(a.service);
        let recv = self.reg(false);
        self.lines.push(format!(
            "invoke-virtual {{p0, v{svc}}}, {class_desc}->getSystemService(Ljava/lang/String;)Ljava/lang/Object;"
        ));
        self.lines.push(format!("move-result-object v{recv}"));
        self.lines.push(format!("check-cast v{recv}, {}", a.class));
        let mut regs = vec![format!("v{recv}")];
        for p in a.params {
            match *p {
                "J" | "D" => {
                    let r = self.reg(true);
                    self.lines.push(format!("const-wide/16 v{r}, 0x64"));
                    regs.push(format!("v{r}"));
                    regs.push(format!("v{}", r + 1));
                }
                "Z" | "I" | "B" | "S" | "C" | "F" => {
                    let r = self.reg(false);
                    self.lines.push(format!("const/4 v{r}, 0x1"));
                    regs.push(format!("v{r}"));
                }
                _ if *p == STR => {
                    let r = self.string("5554");
                    regs.push(format!("v{r}"));
                }
                _ => {
                    let r = self.reg(false);
                    self.lines.push(format!("const/4 v{r}, 0x0"));
                    regs.push(format!("v{r}"));
                }
            }
        }
        self.lines.push(format!(
            "invoke-virtual {{{}}}, {}->{}({}){}",
            regs.join(", "),
            a.class,
            a.method,
            a.params.concat(),
            a.ret
        ));
        match a.ret {
            "V" => {}
            r if r.starts_with('L') || r.starts_with('[') => {
                let d = self.reg(false);
                self.lines.push(format!("move-result-object v{d}"));
            }
            _ => {
                let d = self.reg(false);
                self.lines.push(format!("move-result v{d}"));
            }
        }
    }

    fn url(&mut self, url: &str) {
        let r = self.string(url);
        self.lines.push(format!(
            "invoke-static {{v{r}}}, Landroid/net/Uri;->parse(Ljava/lang/String;)Landroid/net/Uri;"
        ));
    }

    fn render(&self, out: &mut String, signature: &str) {
        let _ = writeln!(out, ".method public {signature}");
        let _ = writeln!(out, "    .locals {}", self.next);
        out.push('\n');
        for l in &self.lines {
            let _ = writeln!(out, "    {l}");
        }
        out.push_str("    return-void\n.end method\n");
    }
}

fn class_file(class_desc: &str, superclass: &str, methods: &[(&str, &MethodBody)]) -> String {
    let mut out =
        format!(".class public {class_desc}\n.super {superclass}\n.source \"gen.java\"\n");
    for (sig, body) in methods {
        out.push('\n');
        body.render(&mut out, sig);
    }
    out
}

struct Draft {
    perms: Vec<String>,
    components: Vec<Component>,
}

impl Draft {
    fn add(&mut self, p: &str) {
        if !self.perms.iter().any(|q| q == p) {
            self.perms.push(p.to_string());
        }
    }

    fn perm_set(&self) -> std::collections::BTreeSet<PermissionName> {
        self.perms.iter().map(PermissionName::new).collect()
    }

    fn actions(&self) -> std::collections::BTreeSet<String> {
        self.components
            .iter()
            .flat_map(|c| c.intent_actions().map(String::from))
            .collect()
    }

    /// Drops permissions until no Kirin rule fires.
    fn defuse(&mut self) {
        loop {
            let v = kirin_classify(&self.perm_set(), &self.actions());
            let Some(rule) = v.triggered_rules.first() else {
                return;
            };
            let rule = &KIRIN_RULES[*rule as usize - 1];
            let pos = self
                .perms
                .iter()
                .rposition(|p| rule.permissions.contains(&p.as_str()))
                .expect("triggered rule has a permission present");
            self.perms.remove(pos);
        }
    }
}

fn maybe(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen_bool(p.clamp(0.0, 1.0))
}

fn benign_components(rng: &mut ChaCha8Rng, d: &mut Draft) {
    if maybe(rng, 0.5) {
        d.components
            .push(Component::new(ComponentKind::Activity, ".SettingsActivity"));
    }
    if maybe(rng, 0.3) {
        d.components
            .push(Component::new(ComponentKind::Activity, ".AboutActivity"));
    }
    if maybe(rng, 0.25) {
        d.components
            .push(Component::new(ComponentKind::Service, ".SyncService"));
    }
    if maybe(rng, 0.2) {
        d.components.push(
            Component::new(ComponentKind::Receiver, ".NetworkReceiver")
                .with_actions(["android.net.conn.CONNECTIVITY_CHANGE"]),
        );
    }
    if maybe(rng, 0.1) {
        d.components
            .push(Component::new(ComponentKind::Provider, ".DataProvider"));
    }
}

fn malicious_components(rng: &mut ChaCha8Rng, d: &mut Draft) {
    if maybe(rng, 0.3) {
        d.components.push(
            Component::new(ComponentKind::Receiver, ".SmsReceiver")
                .with_actions(["android.provider.Telephony.SMS_RECEIVED"]),
        );
    }
    if maybe(rng, 0.25) {
        d.components.push(
            Component::new(ComponentKind::Receiver, ".BootReceiver")
                .with_actions(["android.intent.action.BOOT_COMPLETED"]),
        );
    }
    if maybe(rng, 0.2) {
        d.components
            .push(Component::new(ComponentKind::Service, ".PushService"));
    }
    if maybe(rng, 0.2) {
        d.components
            .push(Component::new(ComponentKind::Activity, ".AdActivity"));
    }
}

fn build_bundle(
    index: usize,
    label: Label,
    timestamp: i64,
    d: Draft,
    smali: SmaliProgram,
) -> Bundle {
    let mut manifest = ManifestDoc::new(format!("com.gen.app{index:05}"));
    manifest
        .attrs
        .push(("android:versionCode".into(), "1".into()));
    for p in &d.perms {
        manifest
            .nodes
            .push(Node::Permission(PermissionRequest::uses(p.as_str())));
    }
    let mut app_nodes = vec![Node::Component(
        Component::new(ComponentKind::Activity, ".MainActivity")
            .with_actions(["android.intent.action.MAIN"]),
    )];
    app_nodes.extend(d.components.into_iter().map(Node::Component));
    manifest.nodes.push(Node::Application(Application {
        attrs: vec![("android:label".into(), "@string/app_name".into())],
        nodes: app_nodes,
    }));
    Bundle {
        id: format!("app{index:05}"),
        label,
        timestamp,
        manifest,
        smali,
        include_files: BTreeMap::new(),
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<Bundle>, BundleError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_benign + spec.n_malicious;
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Benign, spec.n_benign)
        .chain(std::iter::repeat_n(Label::Malicious, spec.n_malicious))
        .collect();
    labels.shuffle(&mut rng);
    let mut forced: Vec<bool> = (0..spec.n_malicious).map(|j| j < spec.n_forced()).collect();
    forced.shuffle(&mut rng);
    let combos = kirin_combos();

    let mut out = Vec::with_capacity(n);
    let mut mal_seen = 0;
    for (i, label) in labels.into_iter().enumerate() {
        let timestamp = BASE_TIMESTAMP + i as i64 * DAY + rng.gen_range(0..3600);
        let malicious = label == Label::Malicious;
        let mut d = Draft {
            perms: Vec::new(),
            components: Vec::new(),
        };
        for f in &spec.benign_family_profile {
            if maybe(&mut rng, f.probability) {
                f.permissions.iter().for_each(|p| d.add(p));
            }
        }
        benign_components(&mut rng, &mut d);

        let class_desc = format!("Lcom/gen/app{i:05}/MainActivity;");
        let mut on_create = MethodBody::new();
        let mut payload = MethodBody::new();
        for a in BENIGN_APIS {
            if maybe(&mut rng, 0.3) {
                on_create.call(&class_desc, a);
            }
        }
        for u in BENIGN_URLS {
            if maybe(&mut rng, 0.25) {
                on_create.url(u);
            }
        }

        if malicious {
            for f in &spec.malicious_family_profile {
                if maybe(&mut rng, f.probability) {
                    f.permissions.iter().for_each(|p| d.add(p));
                }
            }
            malicious_components(&mut rng, &mut d);
            if forced[mal_seen] {
                let (id, perms) = &combos[rng.gen_range(0..combos.len())];
                perms.iter().for_each(|p| d.add(p));
                if *id == 9 {
                    d.components.push(
                        Component::new(ComponentKind::Receiver, ".CallReceiver")
                            .with_actions([CALL_ACTION]),
                    );
                }
            } else {
                d.defuse();
            }
            mal_seen += 1;
            if maybe(&mut rng, spec.suspicious_api_rate) {
                let k = rng.gen_range(1..=3);
                for a in MALICIOUS_APIS.choose_multiple(&mut rng, k) {
                    payload.call(&class_desc, a);
                }
            }
            if maybe(&mut rng, spec.url_rate) {
                let k = rng.gen_range(1..=2);
                for u in MALICIOUS_URLS.choose_multiple(&mut rng, k) {
                    payload.url(u);
                }
            }
        } else {
            d.defuse();
            if maybe(&mut rng, 0.05) {
                on_create.call(&class_desc, &MALICIOUS_APIS[1]);
            }
        }

        let mut methods: Vec<(&str, &MethodBody)> =
            vec![("onCreate(Landroid/os/Bundle;)V", &on_create)];
        if !payload.lines.is_empty() {
            methods.push(("run()V", &payload));
        }
        let text = class_file(&class_desc, "Landroid/app/Activity;", &methods);
        let mut smali = SmaliProgram::default();
        smali.files.insert(
            format!("com/gen/app{i:05}/MainActivity.smali"),
            parse_smali(&text),
        );
        out.push(build_bundle(i, label, timestamp, d, smali));
    }
    Ok(out)
}
