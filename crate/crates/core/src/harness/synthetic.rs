//! Synthetic corpora with phased spam tactics.
//!
//! * P1: keyword mail-merge spam (lottery, invoice, password reset) with
//!   clean links.
//! * P2: the P1 templates with leet, zero-width and homoglyph obfuscation of
//!   the trigger words, sent from rotating look-alike domains.
//! * P3: fluent business-style phishing built from paraphrase rules, with a
//!   forged Reply-To, failing SPF, homograph links and decoy attachments.
//!
//! Ham comes from one benign bank (newsletters, internal threads) shared by
//! all phases. Every message is rendered as RFC 5322 text and parsed back.

use std::fmt::Write as _;

use base64::Engine;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{parse_email, AuthResult, EmailDocument, Label, RawFormat, ReputationTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    P1,
    P2,
    P3,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::P1 => "p1",
            Phase::P2 => "p2",
            Phase::P3 => "p3",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "1" => Some(Phase::P1),
            "p2" | "2" => Some(Phase::P2),
            "p3" | "3" => Some(Phase::P3),
            _ => None,
        }
    }

    fn start(self) -> i64 {
        // 2024-03-01, -04-01, -05-01 UTC
        match self {
            Phase::P1 => 1_709_251_200,
            Phase::P2 => 1_711_929_600,
            Phase::P3 => 1_714_521_600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub phase: Phase,
    pub n_emails: usize,
    pub spam_ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEmail {
    pub doc: EmailDocument,
    /// Template id, e.g. `p3-payroll-2` or `ham-digest`.
    pub template: String,
}

impl SyntheticEmail {
    pub fn is_spam(&self) -> bool {
        self.doc.label == Some(Label::Spam)
    }
}

const WINDOW_SECONDS: i64 = 30 * 86_400;
const ORG: &str = "northwind.example";

const PEOPLE: [&str; 12] = [
    "Alice Chen",
    "Bob Martin",
    "Carla Diaz",
    "Deepak Rao",
    "Emma Novak",
    "Farid Haddad",
    "Grace Kim",
    "Hugo Silva",
    "Ines Costa",
    "Jonas Berg",
    "Kofi Mensah",
    "Lena Fischer",
];
const PROJECTS: [&str; 6] = ["Atlas", "Beacon", "Cobalt", "Delta", "Ember", "Falcon"];
const FEATURES: [&str; 5] = ["dark mode", "bulk export", "audit log", "SSO login", "usage dashboard"];
const CITIES: [&str; 5] = ["Lisbon", "Oslo", "Toronto", "Nairobi", "Seoul"];
const DAYS: [&str; 5] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];
const DOCS: [&str; 4] = ["design doc", "roadmap", "budget sheet", "hiring plan"];

/// Words whose presence marks P1-style spam; the ham bank avoids them.
pub const P1_MARKERS: [&str; 9] = [
    "prize", "winner", "lottery", "claim", "invoice", "overdue", "password", "verify", "won",
];

struct Template {
    id: &'static str,
    subject: &'static str,
    body: &'static str,
}

const HAM: [Template; 15] = [
    Template {
        id: "ham-digest",
        subject: "Weekly engineering digest",
        body: "Hi all,\n\nHere is this week's digest. The {project} team shipped {feature} to staging and the on-call rotation for next week is posted on the wiki at {url}.\n\nHave a good weekend,\n{sender}",
    },
    Template {
        id: "ham-product",
        subject: "Product update: {feature} is now available",
        body: "Hello,\n\nWe are happy to share that {feature} is now available for all workspaces. Read the release notes at {url} and let us know what you think.\n\nThe Tailspin product team",
    },
    Template {
        id: "ham-statement",
        subject: "Your monthly usage summary",
        body: "Hello {recipient},\n\nYour usage summary for this month is ready. Storage grew by {amount} and there were no incidents. Details are in the admin console at {url}.\n\nRegards,\nFabrikam Cloud",
    },
    Template {
        id: "ham-planning",
        subject: "{project} planning for next sprint",
        body: "Hi {recipient},\n\nCould we meet on {day} to go over the {project} backlog? I would like to agree on scope before the sprint starts. I added a few notes at {url}.\n\nThanks,\n{sender}",
    },
    Template {
        id: "ham-notes",
        subject: "Meeting notes from {day}",
        body: "Team,\n\nNotes from {day}: we reviewed the {doc}, agreed to move the {project} launch by one week, and {recipient} will follow up with the partners.\n\nBest,\n{sender}",
    },
    Template {
        id: "ham-lunch",
        subject: "Lunch on {day}?",
        body: "Hey {recipient},\n\nAre you free for lunch on {day}? There is a new place near the office that does great noodles.\n\n{sender}",
    },
    Template {
        id: "ham-review",
        subject: "Draft of the {doc} for review",
        body: "Hi {recipient},\n\nI attached the latest draft of the {doc}. Comments are welcome before {day}; the shared copy is at {url}.\n\nCheers,\n{sender}",
    },
    Template {
        id: "ham-travel",
        subject: "Travel arrangements for {city}",
        body: "Hi {recipient},\n\nThe hotel in {city} is booked for the conference. The train leaves on {day} morning and the agenda is at {url}.\n\nSafe travels,\n{sender}",
    },
    Template {
        id: "ham-codereview",
        subject: "Code review feedback on {feature}",
        body: "Hi {recipient},\n\nI left a few comments on the {feature} change. Mostly naming and one missing test case; otherwise it looks good to merge.\n\n{sender}",
    },
    Template {
        id: "ham-payroll",
        subject: "Payroll calendar for next quarter",
        body: "Hi {recipient},\n\nThe payroll calendar for next quarter is attached. Please review your direct deposit details in the HR portal at {url} before the pay run on {day}.\n\nBest regards,\nPeople Operations",
    },
    Template {
        id: "ham-share",
        subject: "{sender} shared a document with you",
        body: "{sender} shared the updated {doc} with you.\n\nOpen it at {url} with your work account. Let me know your feedback by {day}.",
    },
    Template {
        id: "ham-storage",
        subject: "Mailbox storage notice",
        body: "Hello {recipient},\n\nYour mailbox has used most of its storage. Older messages will be archived automatically after {day}; you can request additional space at {url}.\n\nIT Service Desk",
    },
    Template {
        id: "ham-delivery",
        subject: "Your parcel is on its way",
        body: "Hello {recipient},\n\nYour parcel left our depot and will arrive on {day}. You can reschedule the delivery at {url}.\n\nTailspin Logistics",
    },
    Template {
        id: "ham-remittance",
        subject: "Updated remittance information",
        body: "Hi {recipient},\n\nOur finance team has switched banking partners. The new remittance details are in the attached letter; nothing changes for open orders until {day}. Questions can go to {url}.\n\nRegards,\n{sender}",
    },
    Template {
        id: "ham-offsite",
        subject: "Team offsite agenda",
        body: "Hello everyone,\n\nThe offsite is on {day} in {city}. We will start with a retrospective on {project}, then break into groups. Please add topics at {url}.\n\n{sender}",
    },
];

const P1_SPAM: [Template; 9] = [
    Template {
        id: "lottery-1",
        subject: "Congratulations! You are our lucky winner",
        body: "Dear {recipient},\n\nYour email address was selected in our international lottery draw and you have won {amount}! To claim your prize visit {url} and submit your details.\n\nThis offer expires in 48 hours.",
    },
    Template {
        id: "lottery-2",
        subject: "You have WON {amount}",
        body: "Dear winner,\n\nWe are pleased to inform you that you won {amount} in the annual lottery. Claim your cash prize now at {url} before it is forfeited.",
    },
    Template {
        id: "lottery-3",
        subject: "Claim your cash prize today",
        body: "Hello {recipient},\n\nYou are a confirmed prize winner. Claim {amount} today at {url}. Only a small processing fee is required to release the prize.",
    },
    Template {
        id: "invoice-1",
        subject: "Invoice #{num} overdue - immediate payment required",
        body: "Dear customer,\n\nYour invoice #{num} for {amount} is overdue. Pay the invoice now at {url} to avoid a late fee and suspension of service.",
    },
    Template {
        id: "invoice-2",
        subject: "Final notice: unpaid invoice {num}",
        body: "This is a final notice. Invoice {num} ({amount}) remains overdue. Settle the overdue invoice immediately at {url}.",
    },
    Template {
        id: "invoice-3",
        subject: "Overdue invoice {num} attached",
        body: "Hello,\n\nPlease find the overdue invoice {num} for {amount}. Payment must be received today. Download the invoice at {url}.",
    },
    Template {
        id: "password-1",
        subject: "Password reset required",
        body: "Dear user,\n\nWe detected unusual sign-in activity. Your password will expire in 24 hours. Verify your account at {url} to keep access.",
    },
    Template {
        id: "password-2",
        subject: "Your password expires today",
        body: "Your mailbox password expires today. Verify your password now at {url} or your account will be locked.",
    },
    Template {
        id: "password-3",
        subject: "Security alert: verify your account",
        body: "Security alert for {recipient}: please verify your password at {url} within 24 hours to avoid suspension.",
    },
];

const P1_DOMAINS: [&str; 4] = [
    "prize-center.example",
    "lucky-draw.example",
    "billing-notice.example",
    "account-security.example",
];

/// Look-alike families rotated by P2 senders and links.
const P2_DOMAINS: [&str; 8] = [
    "pr1ze-center.example",
    "prize-centre.example",
    "lucky-drawz.example",
    "1ucky-draw.example",
    "bi11ing-notice.example",
    "billing-notices.example",
    "acc0unt-security.example",
    "account-secur1ty.example",
];

const HAM_SENDERS: [(&str, &str); 4] = [
    ("digest", ORG),
    ("updates", "tailspin.example"),
    ("cloud", "fabrikam.example"),
    ("partners", "contoso.example"),
];

struct Family {
    name: &'static str,
    subject: [&'static str; 2],
    context: &'static str,
    request: &'static str,
    urgency: &'static str,
    attachment: &'static str,
    synonyms: [(&'static str, &'static str); 3],
}

const P3_FAMILIES: [Family; 5] = [
    Family {
        name: "payroll",
        subject: ["Updated payroll details", "Action needed on your payroll record"],
        context: "Following the change to our payroll provider this quarter, a few employee records still need to be confirmed.",
        request: "Please review your direct deposit details in the attached form and confirm them through the secure portal at {url}.",
        urgency: "We need this completed before the next pay run on {day}.",
        attachment: "Payroll_Update_Form.html",
        synonyms: [("review", "check"), ("confirm", "validate"), ("completed", "finished")],
    },
    Family {
        name: "document",
        subject: ["{sender} shared a document with you", "Document shared: {doc}"],
        context: "I have shared the revised {doc} with you ahead of our discussion.",
        request: "You can open it from the attached notice or directly at {url} with your work credentials.",
        urgency: "Let me know your thoughts by end of day on {day}.",
        attachment: "Shared_Document.pdf.html",
        synonyms: [("revised", "updated"), ("open", "access"), ("thoughts", "feedback")],
    },
    Family {
        name: "vendor",
        subject: ["Change of bank details", "Updated remittance information"],
        context: "Our finance team has moved to a new banking partner and our remittance details have changed.",
        request: "Please update our details in your system using the attached letter and confirm at {url}.",
        urgency: "Kindly process this before the next scheduled transfer on {day}.",
        attachment: "Remittance_Letter.docm",
        synonyms: [("moved", "switched"), ("update", "amend"), ("Kindly", "Please")],
    },
    Family {
        name: "quota",
        subject: ["Mailbox storage notice", "Your mailbox is almost full"],
        context: "Your mailbox has reached most of its allotted storage.",
        request: "To keep receiving messages, sign in at {url} and request additional space.",
        urgency: "Messages may be held after {day} if no action is taken.",
        attachment: "Storage_Notice.htm",
        synonyms: [("reached", "used"), ("request", "approve"), ("held", "delayed")],
    },
    Family {
        name: "delivery",
        subject: ["Delivery attempt unsuccessful", "Your parcel is waiting"],
        context: "Our courier could not complete the delivery of your parcel today.",
        request: "Reschedule the delivery using the attached label or at {url}.",
        urgency: "The parcel will be returned to the sender after {day}.",
        attachment: "Shipping_Label.zip",
        synonyms: [("complete", "finish"), ("Reschedule", "Rebook"), ("returned", "sent back")],
    },
];

/// Clause orders used by the paraphrase rules.
const ORDERS: [[usize; 3]; 4] = [[0, 1, 2], [1, 0, 2], [0, 2, 1], [2, 0, 1]];

/// Ids of the P3 spam templates, in generation order.
pub fn p3_templates() -> Vec<String> {
    P3_FAMILIES
        .iter()
        .flat_map(|f| (0..ORDERS.len()).map(move |v| format!("p3-{}-{v}", f.name)))
        .collect()
}

/// Reputation for the benign domains; everything else gets the defaults.
pub fn synthetic_reputation() -> ReputationTable {
    let mut t = ReputationTable::new();
    for (_, d) in HAM_SENDERS {
        t.insert(d, 0.9, 3000.0);
    }
    t
}

fn fill(template: &str, slots: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn address(name: &str, domain: &str) -> String {
    format!("{}@{domain}", name.to_lowercase().replace(' ', "."))
}

fn homoglyph_of(c: char) -> Option<char> {
    Some(match c {
        'a' => 'а',
        'e' => 'е',
        'o' => 'о',
        'c' => 'с',
        'p' => 'р',
        'i' => 'і',
        _ => return None,
    })
}

/// Obfuscates a trigger word; `strong` forces a non-ASCII change.
fn obfuscate(word: &str, strong: bool, rng: &mut ChaCha8Rng) -> String {
    let choice = if strong { rng.gen_range(1..3) } else { rng.gen_range(0..3) };
    match choice {
        0 => word
            .chars()
            .map(|c| match c.to_ascii_lowercase() {
                'a' => '4',
                'e' => '3',
                'i' => '1',
                'o' => '0',
                's' => '5',
                _ => c,
            })
            .collect(),
        1 => {
            let mid = word.char_indices().nth(word.chars().count() / 2).map_or(word.len(), |(i, _)| i);
            format!("{}\u{200d}{}", &word[..mid], &word[mid..])
        }
        _ => {
            let mut done = false;
            let out: String = word
                .chars()
                .map(|c| match homoglyph_of(c) {
                    Some(h) if !done => {
                        done = true;
                        h
                    }
                    _ => c,
                })
                .collect();
            if done {
                out
            } else {
                format!("{word}\u{200d}")
            }
        }
    }
}

/// Obfuscates every trigger word; the first one always gets a non-ASCII change.
fn obfuscate_markers(text: &str, rng: &mut ChaCha8Rng, first: &mut bool) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String, rng: &mut ChaCha8Rng, first: &mut bool| {
        if word.is_empty() {
            return;
        }
        if P1_MARKERS.contains(&word.to_lowercase().as_str()) {
            out.push_str(&obfuscate(word, *first, rng));
            *first = false;
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    let mut in_url = false;
    for c in text.chars() {
        if c.is_whitespace() {
            in_url = false;
        }
        if !in_url && (text_starts_url(&word, c)) {
            in_url = true;
        }
        if c.is_alphanumeric() && !in_url {
            word.push(c);
        } else {
            flush(&mut word, &mut out, rng, first);
            out.push(c);
        }
    }
    flush(&mut word, &mut out, rng, first);
    out
}

fn text_starts_url(word: &str, next: char) -> bool {
    next == ':' && (word == "http" || word == "https")
}

fn paraphrase(text: &str, family: &Family, variant: usize) -> String {
    if variant % 2 == 0 {
        return text.to_string();
    }
    let mut out = text.to_string();
    for (a, b) in family.synonyms {
        out = out.replace(a, b);
    }
    out
}

struct Rendered {
    template: String,
    label: Label,
    from_name: String,
    from: String,
    to_name: String,
    to: String,
    reply_to: Option<String>,
    subject: String,
    body: String,
    spf: &'static str,
    dkim: &'static str,
    attachment: Option<(String, &'static str)>,
    in_reply_to: Option<String>,
    timestamp: i64,
}

fn rfc2047(s: &str) -> String {
    if s.is_ascii() {
        s.to_string()
    } else {
        format!("=?UTF-8?B?{}?=", base64::engine::general_purpose::STANDARD.encode(s))
    }
}

fn render_eml(r: &Rendered, message_id: &str) -> String {
    let mut out = String::new();
    let date = chrono::DateTime::from_timestamp(r.timestamp, 0)
        .expect("timestamp in range")
        .to_rfc2822();
    let _ = writeln!(out, "From: {} <{}>", r.from_name, r.from);
    let _ = writeln!(out, "To: {} <{}>", r.to_name, r.to);
    let _ = writeln!(out, "Subject: {}", rfc2047(&r.subject));
    let _ = writeln!(out, "Date: {date}");
    let _ = writeln!(out, "Message-ID: <{message_id}>");
    if let Some(p) = &r.in_reply_to {
        let _ = writeln!(out, "In-Reply-To: <{p}>");
    }
    if let Some(rt) = &r.reply_to {
        let _ = writeln!(out, "Reply-To: <{rt}>");
    }
    let domain = r.from.rsplit('@').next().unwrap_or_default();
    let _ = writeln!(
        out,
        "Authentication-Results: mx.{ORG}; spf={} smtp.mailfrom={domain}; dkim={} header.d={domain}",
        r.spf, r.dkim
    );
    let _ = writeln!(out, "MIME-Version: 1.0");
    let body64 = base64::engine::general_purpose::STANDARD.encode(r.body.as_bytes());
    match &r.attachment {
        None => {
            let _ = writeln!(out, "Content-Type: text/plain; charset=utf-8");
            let _ = writeln!(out, "Content-Transfer-Encoding: base64\n");
            let _ = writeln!(out, "{body64}");
        }
        Some((name, mime)) => {
            let boundary = format!("b-{message_id}");
            let _ = writeln!(out, "Content-Type: multipart/mixed; boundary=\"{boundary}\"\n");
            let _ = writeln!(out, "--{boundary}");
            let _ = writeln!(out, "Content-Type: text/plain; charset=utf-8");
            let _ = writeln!(out, "Content-Transfer-Encoding: base64\n");
            let _ = writeln!(out, "{body64}");
            let _ = writeln!(out, "--{boundary}");
            let _ = writeln!(out, "Content-Type: {mime}; name=\"{name}\"");
            let _ = writeln!(out, "Content-Disposition: attachment; filename=\"{name}\"");
            let _ = writeln!(out, "Content-Transfer-Encoding: base64\n");
            let payload = format!("decoy {name} {message_id}");
            let _ = writeln!(out, "{}", base64::engine::general_purpose::STANDARD.encode(payload));
            let _ = writeln!(out, "--{boundary}--");
        }
    }
    out
}

fn pick<'a, T>(items: &'a [T], rng: &mut ChaCha8Rng) -> &'a T {
    items.choose(rng).expect("nonempty bank")
}

fn common_slots(rng: &mut ChaCha8Rng, recipient: &str, sender: &str) -> Vec<(&'static str, String)> {
    vec![
        ("recipient", recipient.split(' ').next().unwrap_or(recipient).to_string()),
        ("sender", sender.split(' ').next().unwrap_or(sender).to_string()),
        ("project", pick(&PROJECTS, rng).to_string()),
        ("feature", pick(&FEATURES, rng).to_string()),
        ("city", pick(&CITIES, rng).to_string()),
        ("day", pick(&DAYS, rng).to_string()),
        ("doc", pick(&DOCS, rng).to_string()),
        ("num", rng.gen_range(10_000..99_999).to_string()),
    ]
}

fn ham(rng: &mut ChaCha8Rng, timestamp: i64, threads: &mut Vec<(String, String)>) -> Rendered {
    let t = pick(&HAM, rng);
    let recipient = *pick(&PEOPLE, rng);
    let (from_name, from) = match t.id {
        "ham-digest" => ("Engineering Digest".to_string(), format!("digest@{ORG}")),
        "ham-product" => ("Tailspin Updates".to_string(), "updates@tailspin.example".to_string()),
        "ham-statement" => ("Fabrikam Cloud".to_string(), "cloud@fabrikam.example".to_string()),
        "ham-payroll" => ("People Operations".to_string(), format!("hr@{ORG}")),
        "ham-storage" => ("IT Service Desk".to_string(), format!("it@{ORG}")),
        "ham-delivery" => ("Tailspin Logistics".to_string(), "parcels@tailspin.example".to_string()),
        "ham-remittance" => {
            let person = *pick(&PEOPLE, rng);
            (person.to_string(), address(person, "contoso.example"))
        }
        _ => {
            let person = *pick(&PEOPLE, rng);
            let domain = if rng.gen_bool(0.8) { ORG } else { "contoso.example" };
            (person.to_string(), address(person, domain))
        }
    };
    let mut slots = common_slots(rng, recipient, &from_name);
    slots.push(("amount", format!("{} GB", rng.gen_range(2..90))));
    let url = match (t.id, from.rsplit('@').next()) {
        ("ham-payroll", _) => format!("https://hr.{ORG}/payroll"),
        ("ham-share", _) => format!("https://docs.{ORG}/d/{}", rng.gen_range(10_000..99_999)),
        ("ham-storage", _) => format!("https://it.{ORG}/storage"),
        ("ham-delivery", _) => format!("https://track.tailspin.example/{}", rng.gen_range(10_000..99_999)),
        ("ham-remittance", _) => "https://www.contoso.example/finance".to_string(),
        (_, Some("tailspin.example")) => format!("https://www.tailspin.example/releases/{}", rng.gen_range(100..999)),
        (_, Some("fabrikam.example")) => "https://console.fabrikam.example/usage".to_string(),
        _ => format!("https://wiki.{ORG}/pages/{}", rng.gen_range(1000..9999)),
    };
    slots.push(("url", url));
    let mut subject = fill(t.subject, &slots);
    let mut in_reply_to = None;
    let is_thread = !matches!(
        t.id,
        "ham-digest" | "ham-product" | "ham-statement" | "ham-payroll" | "ham-storage" | "ham-delivery" | "ham-share"
    );
    if is_thread && !threads.is_empty() && rng.gen_bool(0.3) {
        let (mid, subj) = threads[rng.gen_range(0..threads.len())].clone();
        subject = format!("Re: {subj}");
        in_reply_to = Some(mid);
    }
    let attachment = match t.id {
        "ham-review" => Some((format!("{}.pdf", slots[6].1.replace(' ', "_")), "application/pdf")),
        "ham-payroll" => Some(("Payroll_Calendar.pdf".to_string(), "application/pdf")),
        "ham-remittance" => Some(("Remittance_Letter.pdf".to_string(), "application/pdf")),
        _ => None,
    };
    Rendered {
        template: t.id.to_string(),
        label: Label::Ham,
        from_name,
        from,
        to_name: recipient.to_string(),
        to: address(recipient, ORG),
        reply_to: None,
        subject,
        body: fill(t.body, &slots),
        spf: "pass",
        dkim: "pass",
        attachment,
        in_reply_to,
        timestamp,
    }
}

fn p1_spam(rng: &mut ChaCha8Rng, timestamp: i64, domains: &[&str], obfuscated: bool) -> Rendered {
    let t = pick(&P1_SPAM, rng);
    let family = t.id.split('-').next().unwrap_or("spam");
    let domain = if obfuscated {
        *pick(domains, rng)
    } else {
        match family {
            "lottery" => domains[rng.gen_range(0..2)],
            "invoice" => domains[2],
            _ => domains[3],
        }
    };
    let recipient = *pick(&PEOPLE, rng);
    let mut slots = common_slots(rng, recipient, "Support");
    slots.push(("amount", format!("${},{:03}.00", rng.gen_range(1..900), rng.gen_range(0..1000))));
    slots.push(("url", format!("http://{domain}/{family}?id={}", rng.gen_range(1000..9999))));
    let mut subject = fill(t.subject, &slots);
    let mut body = fill(t.body, &slots);
    if obfuscated {
        let mut first = true;
        subject = obfuscate_markers(&subject, rng, &mut first);
        body = obfuscate_markers(&body, rng, &mut first);
    }
    let sender = format!("noreply{}", rng.gen_range(1..50));
    Rendered {
        template: format!("{}-{}", if obfuscated { "p2" } else { "p1" }, t.id),
        label: Label::Spam,
        from_name: "Customer Service".to_string(),
        from: format!("{sender}@{domain}"),
        to_name: recipient.to_string(),
        to: address(recipient, ORG),
        reply_to: None,
        subject,
        body,
        spf: if rng.gen_bool(0.5) { "none" } else { "neutral" },
        dkim: "none",
        attachment: None,
        in_reply_to: None,
        timestamp,
    }
}

fn p3_spam(rng: &mut ChaCha8Rng, timestamp: i64, template: usize) -> Rendered {
    let family = &P3_FAMILIES[template / ORDERS.len()];
    let variant = template % ORDERS.len();
    let recipient = *pick(&PEOPLE, rng);
    let impersonated = *pick(&PEOPLE, rng);
    let mut slots = common_slots(rng, recipient, impersonated);
    // Cyrillic "о" in the host makes it a homograph of the org portal.
    let host = format!("portal-n\u{043e}rthwind.example");
    slots.push(("url", format!("https://{host}/{}/{}", family.name, rng.gen_range(1000..9999))));
    let clauses = [family.context, family.request, family.urgency];
    let order = ORDERS[variant];
    let text = order.iter().map(|&i| clauses[i]).collect::<Vec<_>>().join(" ");
    let body = format!(
        "Hi {},\n\n{}\n\nBest regards,\n{}",
        slots[0].1,
        paraphrase(&fill(&text, &slots), family, variant),
        impersonated
    );
    let subject = paraphrase(&fill(family.subject[variant % 2], &slots), family, variant);
    let mime = if family.attachment.ends_with(".zip") {
        "application/zip"
    } else if family.attachment.ends_with(".docm") {
        "application/vnd.ms-word.document.macroEnabled.12"
    } else {
        "text/html"
    };
    Rendered {
        template: format!("p3-{}-{variant}", family.name),
        label: Label::Spam,
        from_name: impersonated.to_string(),
        from: address(impersonated, ORG),
        to_name: recipient.to_string(),
        to: address(recipient, ORG),
        reply_to: Some(format!("{}.{}@mail-relay{}.example", impersonated.split(' ').next().unwrap_or("hr").to_lowercase(), rng.gen_range(1..9), rng.gen_range(1..6))),
        subject,
        body,
        spf: "fail",
        dkim: "fail",
        attachment: Some((family.attachment.to_string(), mime)),
        in_reply_to: None,
        timestamp,
    }
}

/// Deterministic labeled corpus for one phase.
pub fn generate_phase_corpus(spec: &PhaseSpec) -> Vec<SyntheticEmail> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (spec.phase as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let n_spam = ((spec.n_emails as f64) * spec.spam_ratio).round() as usize;
    let mut is_spam: Vec<bool> = (0..spec.n_emails).map(|i| i < n_spam).collect();
    is_spam.shuffle(&mut rng);
    let mut times: Vec<i64> = (0..spec.n_emails)
        .map(|_| spec.phase.start() + rng.gen_range(0..WINDOW_SECONDS))
        .collect();
    times.sort_unstable();
    let p3 = p3_templates().len();
    let mut threads: Vec<(String, String)> = Vec::new();
    let mut out = Vec::with_capacity(spec.n_emails);
    for (i, (&spam, &ts)) in is_spam.iter().zip(&times).enumerate() {
        let r = match (spam, spec.phase) {
            (false, _) => ham(&mut rng, ts, &mut threads),
            (true, Phase::P1) => p1_spam(&mut rng, ts, &P1_DOMAINS, false),
            (true, Phase::P2) => p1_spam(&mut rng, ts, &P2_DOMAINS, true),
            (true, Phase::P3) => {
                let t = rng.gen_range(0..p3);
                p3_spam(&mut rng, ts, t)
            }
        };
        let id = format!("{}-s{}-{i:05}", spec.phase.as_str(), spec.seed);
        let from_domain = r.from.rsplit('@').next().unwrap_or("local").to_string();
        let message_id = format!("{id}@{from_domain}");
        let raw = render_eml(&r, &message_id);
        let mut doc = parse_email(raw.as_bytes(), RawFormat::Eml).expect("generated messages parse");
        doc.id = id;
        doc.label = Some(r.label);
        if r.label == Label::Ham && r.in_reply_to.is_none() && !r.subject.starts_with("Re:") {
            threads.push((message_id, r.subject.clone()));
        }
        out.push(SyntheticEmail {
            doc,
            template: r.template,
        });
    }
    out
}

fn has_non_ascii_obfuscation(s: &str) -> bool {
    s.chars().any(|c| c == '\u{200d}' || ('\u{0400}'..='\u{04ff}').contains(&c))
}

/// Whether `doc` carries one of `phase`'s attack markers.
pub fn has_attack_marker(phase: Phase, doc: &EmailDocument) -> bool {
    match phase {
        Phase::P1 => {
            let text = doc.text_content();
            crate::ingest::text::tokenize(&text)
                .iter()
                .any(|t| P1_MARKERS.contains(&t.as_str()))
        }
        Phase::P2 => {
            has_non_ascii_obfuscation(&doc.subject)
                || has_non_ascii_obfuscation(&doc.body)
                || doc.sender_domain.as_deref().is_some_and(|d| P2_DOMAINS.contains(&d))
        }
        Phase::P3 => {
            doc.reply_to.is_some()
                && doc.reply_to != doc.sender_address
                && doc.auth_flags.spf_pass == AuthResult::Fail
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(phase: Phase) -> PhaseSpec {
        PhaseSpec {
            phase,
            n_emails: 120,
            spam_ratio: 0.5,
            seed: 7,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_phase_corpus(&spec(Phase::P1));
        let b = generate_phase_corpus(&spec(Phase::P1));
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.iter().filter(|e| e.is_spam()).count(), 60);
    }

    #[test]
    fn markers_are_sound() {
        for phase in [Phase::P1, Phase::P2, Phase::P3] {
            for e in generate_phase_corpus(&spec(phase)) {
                if e.is_spam() {
                    assert!(has_attack_marker(phase, &e.doc), "{phase:?} {}", e.template);
                } else {
                    for p in [Phase::P1, Phase::P2, Phase::P3] {
                        assert!(!has_attack_marker(p, &e.doc), "ham {} has a {p:?} marker", e.template);
                    }
                }
            }
        }
    }

    #[test]
    fn p3_spam_forges_headers() {
        for e in generate_phase_corpus(&spec(Phase::P3)).iter().filter(|e| e.is_spam()) {
            assert_ne!(e.doc.reply_to, e.doc.sender_address);
            assert!(e.doc.reply_to.is_some());
            assert_eq!(e.doc.auth_flags.spf_pass, AuthResult::Fail);
            assert_eq!(e.doc.attachments.len(), 1);
            assert!(e.doc.urls.iter().any(|u| u.is_homograph_suspect));
        }
    }

    #[test]
    fn p2_spam_is_obfuscated() {
        for e in generate_phase_corpus(&spec(Phase::P2)).iter().filter(|e| e.is_spam()) {
            assert!(has_non_ascii_obfuscation(&e.doc.subject) || has_non_ascii_obfuscation(&e.doc.body));
        }
    }

    #[test]
    fn headers_survive_parsing() {
        let corpus = generate_phase_corpus(&spec(Phase::P1));
        for e in &corpus {
            assert!(e.doc.timestamp.is_some());
            assert!(e.doc.sender_address.is_some());
            assert_eq!(e.doc.recipient_addresses.len(), 1);
            assert!(!e.doc.body.is_empty());
        }
        assert!(corpus.iter().any(|e| e.doc.in_reply_to.is_some()));
    }
}
