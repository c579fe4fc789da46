#!/usr/bin/env python3
"""Generate the replay corpus and the attribution fixtures under tests/fixtures.

The output is deterministic for a given seed. Expected site records are
derived from how each site is constructed (which element leads where, which
host receives the login request, how the password is written into it); the
scanner is never run to produce them.

usage: make_corpus.py [--seed N] [--out tests/fixtures]
"""

import argparse
import base64
import json
import random
import shutil
import string
import urllib.parse
from pathlib import Path

VIEWPORT = (1920, 1080)
INTERACTIVE = {"a", "button", "input", "select", "textarea", "label"}

# name -> (cname pattern, address block, RDAP org, network name)
PROVIDERS = {
    "Cloudflare": ("{label}.cdn.cloudflare.net", "104.16.", "Cloudflare, Inc.", "CLOUDFLARENET"),
    "Akamai": ("{label}.edgekey.net", "23.45.", "Akamai Technologies, Inc.", "AKAMAI"),
    "Fastly": ("{label}.map.fastly.net", "151.101.", "Fastly, Inc.", "SKYCA-3"),
    "Highwinds": ("{label}.hwcdn.net", "205.185.", "Highwinds Network Group, Inc.", "HIGHWINDS3"),
    "Edgecast": ("{label}.edgecastcdn.net", "72.21.", "EdgeCast Networks, Inc.", "EDGECAST-NETBLK-03"),
    "Incapsula": ("{label}.x.incapdns.net", "45.60.", "Incapsula Inc", "INCAPSULA"),
    "Quantil": ("{label}.qtlcdn.com", "163.171.", "QUANTIL NETWORKS INC", "QUANTIL"),
    "CDNetworks": ("{label}.cdngc.net", "180.87.", "CDNetworks Inc.", "CDNETWORKS"),
    "Limelight": ("{label}.llnwd.net", "68.142.", "Limelight Networks, Inc.", "LLNW"),
}
ORIGINS = {
    "do": ("159.65.", "DigitalOcean, LLC", "DIGITALOCEAN-159-65-0-0"),
    "linode": ("45.79.", "Linode", "LINODE-US"),
    "hetzner": ("88.99.", "Hetzner Online GmbH", "HETZNER-NET"),
    "ovh": ("51.75.", "OVH SAS", "OVH"),
    "aws": ("52.20.", "Amazon Technologies Inc.", "AT-88-Z"),
}
CATEGORIES = ["Retail", "Internet", "Business", "Entertain", "News", "Finance", "Technology",
              "Education", "Society", "Travel", "Science", "Sports", "Health", "Reference"]
NAV_WORDS = {
    "Retail": ["Shop", "Deals", "New arrivals", "Brands", "Gift cards"],
    "Internet": ["Explore", "Trending", "Communities", "Apps"],
    "Business": ["Solutions", "Pricing", "Customers", "Partners"],
    "Entertain": ["Movies", "Series", "Music", "Live"],
    "News": ["World", "Politics", "Opinion", "Video"],
    "Finance": ["Cards", "Loans", "Investing", "Rates"],
    "Technology": ["Products", "Developers", "Docs", "Blog"],
    "Education": ["Courses", "Programs", "Admissions", "Library"],
    "Society": ["Events", "Groups", "Volunteer", "Stories"],
    "Travel": ["Flights", "Hotels", "Cars", "Destinations"],
    "Science": ["Research", "Journals", "Data", "Outreach"],
    "Sports": ["Scores", "Teams", "Fixtures", "Tickets"],
    "Health": ["Conditions", "Doctors", "Clinics", "Wellness"],
    "Reference": ["Browse", "Dictionary", "Random page", "Contents"],
    None: ["Home", "About", "Blog", "Contact"],
}


# ---------------------------------------------------------------------------
# DNS and RDAP world


class World:
    def __init__(self):
        self.dns = {}
        self.rdap = {}
        self.truth = {}
        self.used = {}

    def _ip(self, prefix):
        n = self.used.get(prefix, 0) + 1
        self.used[prefix] = n
        return f"{prefix}{n // 250}.{n % 250 + 1}"

    def _rdap(self, ip, org, net):
        self.rdap[ip] = {
            "objectClassName": "ip network",
            "handle": "NET-" + ip.replace(".", "-"),
            "startAddress": ip.rsplit(".", 1)[0] + ".0",
            "endAddress": ip.rsplit(".", 1)[0] + ".255",
            "name": net,
            "entities": [{
                "objectClassName": "entity",
                "handle": net[:8] + "-ORG",
                "roles": ["registrant"],
                "vcardArray": ["vcard", [["version", {}, "text", "4.0"],
                                         ["fn", {}, "text", org],
                                         ["kind", {}, "text", "org"]]],
            }],
        }

    def a(self, name, ips):
        self.dns[f"{name} A"] = {"rcode": "NOERROR", "records": ips, "ttl": 300}

    def cname(self, name, target):
        self.dns[f"{name} CNAME"] = {"rcode": "NOERROR", "records": [target], "ttl": 300}

    def ns(self, zone, servers):
        self.dns[f"{zone} NS"] = {"rcode": "NOERROR", "records": servers, "ttl": 86400}

    def cdn_address(self, provider):
        prefix, org, net = PROVIDERS[provider][1:]
        ip = self._ip(prefix)
        self._rdap(ip, org, net)
        return ip

    def origin_address(self, kind):
        prefix, org, net = ORIGINS[kind]
        ip = self._ip(prefix)
        self._rdap(ip, org, net)
        return ip

    def cdn_host(self, host, provider, basis="cname"):
        if host in self.truth:
            assert self.truth[host] == provider, host
            return
        if basis == "cname":
            target = PROVIDERS[provider][0].format(label=host.replace(".", "-"))
            if provider == "Akamai":
                edge = f"e{len(self.truth) + 1000}.a.akamaiedge.net"
                self.cname(host, target)
                self.cname(target, edge)
                self.a(edge, [self.cdn_address(provider)])
            else:
                self.cname(host, target)
                self.a(target, [self.cdn_address(provider), self.cdn_address(provider)])
        else:
            self.a(host, [self.cdn_address(provider)])
        self.truth[host] = provider

    def origin_host(self, host, kind="do"):
        if host in self.truth:
            assert self.truth[host] is None, host
            return
        self.a(host, [self.origin_address(kind)])
        self.truth[host] = None


# ---------------------------------------------------------------------------
# Snapshots


class Page:
    def __init__(self, url, captured_at, doc_height=2600):
        self.url = url
        self.captured_at = captured_at
        self.nodes = []
        w = VIEWPORT[0]
        self.html = self.add(None, "html", bbox=(0, 0, w, doc_height))
        self.body = self.add(self.html, "body", bbox=(0, 0, w, doc_height))

    def add(self, parent, tag, attrs=(), text="", bbox=(0, 0, 0, 0), visible=None,
            interactive=None, frame=None):
        nid = len(self.nodes) + 1
        top, left, width, height = bbox
        area = width > 0 and height > 0
        self.nodes.append({
            "id": nid, "tag": tag, "attrs": [list(a) for a in attrs], "own": text,
            "bbox": [top, left, width, height],
            "visible": area if visible is None else (visible and area),
            "interactive": tag in INTERACTIVE if interactive is None else interactive,
            "children": [], "frame": frame,
        })
        if parent is not None:
            self.nodes[parent - 1]["children"].append(nid)
        return nid

    def text(self, nid):
        node = self.nodes[nid - 1]
        parts = [node["own"]] + [self.text(c) for c in node["children"]]
        return " ".join(p for p in parts if p)

    def to_json(self):
        nodes = []
        for n in self.nodes:
            out = {"id": n["id"], "tag": n["tag"], "attrs": n["attrs"], "text": self.text(n["id"]),
                   "bbox": n["bbox"], "visible": n["visible"], "interactive": n["interactive"],
                   "children": n["children"]}
            if n["frame"] is not None:
                out["text"] = ""
                out["frame"] = n["frame"].to_json()
            nodes.append(out)
        return {"url": self.url, "viewport": {"width": VIEWPORT[0], "height": VIEWPORT[1]},
                "captured_at": self.captured_at, "nodes": nodes}


def header(page, site, extra=()):
    """Site header with logo and category nav; returns the header node id."""
    hdr = page.add(page.body, "header", [("class", "site-header")], bbox=(0, 0, 1920, 80))
    page.add(hdr, "a", [("href", "/"), ("class", "logo")], site.title, (20, 40, 160, 40))
    nav = page.add(hdr, "nav", [("class", "main-nav")], bbox=(20, 300, 900, 40))
    left = 300
    for word in NAV_WORDS[site.category][:4]:
        slug = word.lower().replace(" ", "-")
        page.add(nav, "a", [("href", f"/{slug}")], word, (28, left, 110, 24))
        left += 130
    for attrs, text, box in extra:
        page.add(hdr, attrs[0], attrs[1], text, box)
    return hdr


def footer(page, top=2300):
    ftr = page.add(page.body, "footer", [("class", "site-footer")], bbox=(top, 0, 1920, 200))
    left = 40
    for text, href in [("About us", "/about"), ("Privacy Policy", "/privacy"),
                       ("Terms of Use", "/terms"), ("Help Center", "/help"),
                       ("Careers", "/careers")]:
        page.add(ftr, "a", [("href", href)], text, (top + 40, left, 120, 20))
        left += 160
    return ftr


def content(page, site, rng, top=120, paragraphs=3):
    main = page.add(page.body, "main", [("id", "content")], bbox=(top, 0, 1920, 1800))
    page.add(main, "h1", [], f"Welcome to {site.title}", (top + 20, 40, 900, 48))
    y = top + 100
    for i in range(paragraphs):
        page.add(main, "p", [], LOREM[(site.index + i) % len(LOREM)], (y, 40, 900, 60))
        y += 80
    return main


LOREM = [
    "Discover the latest from our team and find what you need faster.",
    "Free shipping on orders over 50 and easy returns within 30 days.",
    "Read the stories everyone is talking about today.",
    "Trusted by thousands of customers around the world since 1998.",
    "Plan your next trip with flexible dates and no booking fees.",
    "New research highlights published this week by our scientists.",
    "Get the scores, schedules and highlights for every match.",
]


def login_form(page, parent, top, left=760, account="email", button="Log in", form_id="login-form",
               password_name="password"):
    """A login form; returns (account node id or None, password node id)."""
    form = page.add(parent, "form", [("id", form_id), ("method", "post"), ("action", "/session")],
                    bbox=(top, left, 400, 320))
    acct = None
    y = top + 10
    if account == "email":
        page.add(form, "label", [("for", "email")], "Email address", (y, left, 400, 20))
        acct = page.add(form, "input", [("type", "email"), ("name", "email"), ("id", "email"),
                                        ("autocomplete", "username")], "", (y + 24, left, 400, 40))
    elif account == "username":
        page.add(form, "label", [("for", "user_name")], "Username", (y, left, 400, 20))
        acct = page.add(form, "input", [("type", "text"), ("name", "username"), ("id", "user_name")],
                        "", (y + 24, left, 400, 40))
    elif account == "login":
        acct = page.add(form, "input", [("type", "text"), ("name", "login"), ("id", "login_field"),
                                        ("placeholder", "Phone, email or username")],
                        "", (y + 24, left, 400, 40))
    y += 80
    page.add(form, "label", [("for", "pw")], "Password", (y, left, 400, 20))
    pw = page.add(form, "input", [("type", "password"), ("name", password_name), ("id", "pw"),
                                  ("autocomplete", "current-password")], "", (y + 24, left, 400, 40))
    page.add(form, "a", [("href", "/password/reset")], "Forgot your password?", (y + 72, left, 200, 20))
    page.add(form, "button", [("type", "submit"), ("class", "btn btn-primary")], button,
             (y + 110, left, 400, 44))
    return acct, pw


# ---------------------------------------------------------------------------
# Password search oracle: canonical encodings only, in scan order.


def q(s):
    return urllib.parse.quote_plus(s, safe="")


def b64(s, urlsafe=False):
    raw = base64.urlsafe_b64encode(s.encode()) if urlsafe else base64.b64encode(s.encode())
    return raw.decode()


def candidates(password, encoding):
    if encoding == "plaintext":
        return [password]
    if encoding == "url-encoded":
        return [q(password)] if q(password) != password else []
    if encoding == "json-embedded":
        escaped = json.dumps(password)[1:-1]
        return [escaped] if escaped != password else []
    std, safe = b64(password), b64(password, True)
    target = {"base64-std": [std], "base64-urlsafe": [safe] if safe != std else [],
              "base64-nopad": [std.rstrip("="), safe.rstrip("=")] if std.endswith("=") else []}[encoding]
    out = []
    for t in target:
        out += [t] if q(t) == t else [t, q(t)]
    return out


ENCODINGS = ["plaintext", "url-encoded", "base64-std", "base64-urlsafe", "base64-nopad",
             "json-embedded"]


def regions(req):
    body = req["_body"]
    ctype = req["_ctype"]
    out = []
    if ctype.startswith("multipart/form-data"):
        boundary = ctype.split("boundary=", 1)[1]
        for chunk_start in find_all(body, "--" + boundary + "\r\n"):
            head_start = chunk_start + len(boundary) + 4
            head_end = body.index("\r\n\r\n", head_start)
            name = body[head_start:head_end].split('name="', 1)[1].split('"', 1)[0]
            data_start = head_end + 4
            data_end = body.index("\r\n--" + boundary, data_start)
            out.append(("body", data_start, body[data_start:data_end], "part", name))
    elif body:
        syntax = "json" if "json" in ctype or body.lstrip()[:1] in ("{", "[") else (
            "form" if "x-www-form-urlencoded" in ctype or "=" in body else "opaque")
        out.append(("body", 0, body, syntax, None))
    url = req["url"]
    if "?" in url:
        start = url.index("?") + 1
        end = url.find("#", start)
        query = url[start:end if end >= 0 else len(url)]
        if query:
            out.append(("url", start, query, "form", None))
    return out


def find_all(s, sub):
    i = s.find(sub)
    while i >= 0:
        yield i
        i = s.find(sub, i + 1)


def field_of(data, start, syntax, part):
    if syntax == "part":
        return part
    if syntax == "form":
        seg_start = data.rfind("&", 0, start) + 1
        seg = data[seg_start:].split("&", 1)[0]
        if "=" not in seg or seg_start + seg.index("=") >= start:
            return None
        return urllib.parse.unquote_plus(seg.split("=", 1)[0]) or None
    if syntax == "json":
        # The key is the string literal right before the ':' preceding the value.
        head = data[:start].rstrip()
        head = head[:-1].rstrip() if head.endswith('"') else head
        if not head.endswith(":"):
            return None
        key_end = head[:-1].rstrip()
        key_start = key_end[:-1].rfind('"')
        return json.loads(key_end[key_start:])
    return None


def find_password(req, password, index):
    for encoding in ENCODINGS:
        for location, offset, data, syntax, part in regions(req):
            for cand in candidates(password, encoding):
                pos = data.find(cand)
                if pos < 0:
                    continue
                return {"request_index": index, "encoding": encoding, "location": location,
                        "byte_offset": offset + pos, "length": len(cand),
                        "matched_field": field_of(data, pos, syntax, part)}
    return None


def credential_bearing(req, creds):
    if find_password(req, creds["password"], 0):
        return True
    for ident in (creds["account"], creds["account"] + "@example.com"):
        for where in (req["_body"], req["url"]):
            if ident in where or q(ident) in where or b64(ident).rstrip("=") in where:
                return True
    return req["method"] not in ("GET", "HEAD") and bool(req["_body"])


def host_of(url):
    return urllib.parse.urlsplit(url).hostname


def classify(requests, creds, truth):
    seen = False
    for i, r in enumerate(requests):
        ev = find_password(r, creds["password"], i)
        if not ev:
            continue
        seen = True
        provider = truth[host_of(r["url"])]
        if provider:
            return {"kind": "PasswordExposed", "provider": provider, "evidence": ev, "error": None}
    bearing, provider = False, None
    for r in requests:
        if credential_bearing(r, creds):
            bearing = True
            provider = provider or truth[host_of(r["url"])]
    if seen or (bearing and not provider):
        return {"kind": "NotCdnTerminated", "provider": None, "evidence": None, "error": None}
    return {"kind": "PasswordEncrypted", "provider": provider, "evidence": None, "error": None}


# ---------------------------------------------------------------------------
# Sites


class Site:
    def __init__(self, index, rank, category, rng):
        self.index = index
        self.rank = rank
        self.domain = f"site{index:03d}.example"
        self.title = f"Site {index:03d}"
        self.category = category
        self.rng = rng
        self.https = True
        self.http_status = 200
        self.has_login = False
        self.pages = []
        self.transitions = []
        self.probe = None
        self.submission = None
        self.expect = "none"
        self.host = "www." + self.domain
        self.creds = {"account": "".join(rng.choice(string.ascii_lowercase + string.digits)
                                         for _ in range(24)),
                      "password": random_password(rng)}
        self.note = ""
        self.ground_truth = None

    @property
    def url(self):
        return f"{'https' if self.https else 'http'}://{self.host}/"

    def page(self, path="/", **kw):
        n = len(self.pages)
        stamp = f"2020-10-05T09:{self.index % 60:02d}:{10 + 5 * n:02d}Z"
        p = Page(f"{'https' if self.https else 'http'}://{self.host}{path}", stamp, **kw)
        self.pages.append(p)
        return p

    def link(self, src, node, dst, frame=None):
        self.transitions.append({"from": self.pages.index(src),
                                 "click": f"{frame}/{node}" if frame else str(node),
                                 "to": self.pages.index(dst)})

    def request(self, url, method="GET", body="", ctype="", extra=()):
        headers = [["User-Agent", "Mozilla/5.0 (X11; Linux x86_64) Chrome/86.0"]]
        if ctype:
            headers.append(["Content-Type", ctype])
        headers += [list(h) for h in extra]
        return {"url": url, "method": method, "headers": headers, "_body": body, "_ctype": ctype}


def random_password(rng, predicate=lambda p: True):
    while True:
        p = "".join(chr(rng.randint(0x21, 0x7E)) for _ in range(16))
        if predicate(p):
            return p


def login_body(site, style, email):
    """Login request parts for a style: (method, path suffix, body, content type)."""
    rng = site.rng
    acct = email
    pw = site.creds["password"]
    if style == "form":
        return "POST", "", f"{q('user[email]')}={q(acct)}&{q('user[password]')}={q(pw)}&remember_me=1", \
            "application/x-www-form-urlencoded"
    if style == "json":
        return "POST", "", json.dumps({"email": acct, "password": pw, "rememberMe": True}), \
            "application/json"
    if style == "multipart":
        boundary = "----WebKitFormBoundary" + "".join(rng.choice(string.ascii_letters) for _ in range(16))
        parts = [("username", acct), ("password", pw), ("csrf_token", "%032x" % rng.getrandbits(128))]
        body = "".join(f"--{boundary}\r\nContent-Disposition: form-data; name=\"{k}\"\r\n\r\n{v}\r\n"
                       for k, v in parts) + f"--{boundary}--\r\n"
        return "POST", "", body, f"multipart/form-data; boundary={boundary}"
    if style == "b64json":
        return "POST", "", json.dumps({"login": acct, "pwd": b64(pw), "enc": "b64"}), "application/json"
    if style == "b64url_form":
        return "POST", "", f"u={q(acct)}&p={q(b64(pw, True))}", "application/x-www-form-urlencoded"
    if style == "b64nopad_json":
        return "POST", "", json.dumps({"identifier": acct, "secret": b64(pw).rstrip("=")}), \
            "application/json; charset=UTF-8"
    if style == "query":
        return "GET", f"?user={q(acct)}&pass={q(pw)}&lang=en", "", ""
    if style == "encrypted":
        blob = base64.b64encode(bytes(rng.getrandbits(8) for _ in range(128))).decode()
        return "POST", "", json.dumps({"email": acct, "enc_password": "#PWD_ENC:1:" + blob}), \
            "application/json"
    raise ValueError(style)


def password_rule(style):
    # Shapes the random password so each style exercises the intended encoding.
    if style == "json_escaped":
        return lambda p: '"' in p or "\\" in p
    if style == "json":
        return lambda p: '"' not in p and "\\" not in p
    if style == "b64url_form":
        return lambda p: b64(p) != b64(p, True)
    return lambda p: True


def build_login_site(site, spec, world):
    """spec keys: entry, account, style, dest, provider, basis, special."""
    rng = site.rng
    style = spec["style"]
    base_style = {"json_escaped": "json", "form_plain": "form"}.get(style, style)
    site.creds["password"] = random_password(rng, password_rule(style))
    if style == "form_plain":
        site.creds["password"] = "".join(rng.choice(string.ascii_letters + string.digits + "-._~")
                                         for _ in range(16))
    site.has_login = True
    entry = spec["entry"]
    account = spec.get("account", "email")

    landing = site.page("/")
    entrance_text = spec.get("entrance", "Log in")
    extra = []
    if entry in ("link", "iframe", "modal", "menu2"):
        tag = "button" if entry == "modal" else "a"
        href = {"link": "/login", "iframe": "/signin", "menu2": "/account", "modal": "#"}[entry]
        attrs = [("href", href), ("class", "nav-link")] if tag == "a" else \
            [("type", "button"), ("class", "btn-auth"), ("data-toggle", "modal")]
        extra.append(((tag, attrs), entrance_text, (24, 1600, 120, 32)))
    hdr = header(landing, site, extra)
    main = content(landing, site, rng)
    footer(landing)
    entrance_node = landing.nodes[hdr - 1]["children"][-1] if extra else None

    frame_id = None
    if entry == "direct":
        form_page, parent, top = landing, main, 420
    elif entry == "menu2":
        menu = site.page("/account")
        header(menu, site)
        box = menu.add(menu.body, "div", [("class", "account-menu")], bbox=(90, 1500, 300, 200))
        menu.add(box, "p", [], "Welcome! Choose an option below.", (100, 1510, 280, 20))
        sign_in = menu.add(box, "a", [("href", "/login"), ("class", "menu-item")], "Sign in",
                           (130, 1510, 280, 30))
        menu.add(box, "a", [("href", "/register"), ("class", "menu-item")], "Register",
                 (170, 1510, 280, 30))
        footer(menu)
        site.link(landing, entrance_node, menu)
        form_page = site.page("/login")
        header(form_page, site)
        parent, top = form_page.add(form_page.body, "main", [], bbox=(120, 0, 1920, 900)), 200
        footer(form_page)
        site.link(menu, sign_in, form_page)
    elif entry == "modal":
        form_page = site.page("/")
        header(form_page, site, extra)
        content(form_page, site, rng)
        parent = form_page.add(form_page.body, "div", [("class", "modal show"), ("role", "dialog")],
                               bbox=(200, 700, 520, 480))
        top = 260
        footer(form_page)
        site.link(landing, entrance_node, form_page)
    elif entry == "iframe":
        form_page = site.page("/signin")
        header(form_page, site)
        inner = Page(f"https://{spec.get('frame_host', 'auth.' + site.domain)}/embed/login",
                     form_page.captured_at, doc_height=600)
        frame_body = inner.add(inner.body, "div", [("class", "embedded")], bbox=(0, 0, 460, 560))
        acct, pw = login_form(inner, frame_body, 20, left=20, account=account, button="Sign in")
        frame_id = form_page.add(form_page.body, "iframe",
                                 [("src", inner.url), ("title", "Sign in"), ("name", "auth-frame")],
                                 bbox=(180, 730, 460, 560), interactive=False, frame=inner)
        footer(form_page)
        site.link(landing, entrance_node, form_page)
    else:
        form_page = site.page("/login")
        header(form_page, site)
        parent, top = form_page.add(form_page.body, "main", [], bbox=(120, 0, 1920, 900)), 200
        footer(form_page)
        site.link(landing, entrance_node, form_page)

    if entry != "iframe":
        acct, pw = login_form(form_page, parent, top, account=account,
                              button=spec.get("button", "Log in"))
        if spec.get("register_form"):
            reg = form_page.add(parent, "form", [("id", "signup-form"), ("action", "/users")],
                                bbox=(top + 360, 760, 400, 300))
            form_page.add(reg, "h2", [], "New here? Create your profile", (top + 360, 760, 400, 30))
            form_page.add(reg, "input", [("type", "text"), ("name", "new_email")], "",
                          (top + 400, 760, 400, 40))
            form_page.add(reg, "input", [("type", "password"), ("name", "new_password"),
                                         ("autocomplete", "new-password")], "",
                          (top + 450, 760, 400, 40))
    if spec.get("special") == "captcha":
        form_page.add(parent if entry != "iframe" else form_page.body, "div",
                      [("class", "g-recaptcha"), ("data-sitekey", "6Lc" + "%x" % rng.getrandbits(64))],
                      bbox=(top + 330 if entry != "iframe" else 760, 760, 304, 78))

    # The fill value the detector will choose for the account field.
    email_fill = account == "email" or spec.get("account_is_email", False)
    ident = site.creds["account"] + "@example.com" if email_fill else site.creds["account"]
    target_page = site.pages.index(form_page)
    target = f"{frame_id}/{pw}" if frame_id else str(pw)
    site.ground_truth = {"login_snapshot": target_page, "password": target,
                         "account": (f"{frame_id}/{acct}" if frame_id else str(acct)) if acct else None,
                         "entrance": str(entrance_node) if entrance_node else None}

    # Hosts.
    provider = spec.get("provider")
    if provider:
        world.cdn_host(site.host, provider, spec.get("basis", "cname"))
    else:
        world.origin_host(site.host, spec.get("origin", "do"))
    dest = spec.get("dest", "same")
    login_host = {"same": site.host, "api": "api." + site.domain, "bypass": "secure." + site.domain,
                  "frame": spec.get("frame_host", "auth." + site.domain)}[dest]
    if dest == "api" or (dest == "frame" and spec.get("frame_provider")):
        world.cdn_host(login_host, spec.get("frame_provider", provider), "cname")
    elif dest in ("bypass", "frame"):
        world.origin_host(login_host, spec.get("origin", "aws"))
    if entry == "iframe" and dest != "frame":
        world.origin_host(spec.get("frame_host", "auth." + site.domain), "aws")

    method, suffix, body, ctype = login_body(site, base_style, ident)
    path = {"form": "/session", "json": "/api/v1/auth/login", "multipart": "/login",
            "b64json": "/member/login.do", "b64url_form": "/login", "b64nopad_json": "/auth",
            "query": "/login", "encrypted": "/accounts/login/ajax/"}[base_style]
    login_req = site.request(f"https://{login_host}{path}{suffix}", method, body, ctype,
                             [("Origin", f"https://{site.host}")])
    reqs = []
    if spec.get("preflight"):
        reqs.append(site.request(f"https://{login_host}{path}", "OPTIONS", "", "",
                                 [("Access-Control-Request-Method", "POST")]))
    reqs.append(login_req)
    reqs.append(site.request(f"https://{site.host}/dashboard"))
    if spec.get("beacon"):
        beacon_host = "collect.tagpulse.example"
        world.origin_host(beacon_host, "linode")
        reqs.append(site.request(f"https://{beacon_host}/g/collect?v=2&en=login&sid={rng.getrandbits(32)}"))

    special = spec.get("special")
    if special == "existence":
        probe_host = site.host
        probe = site.request(f"https://{probe_host}/api/users/exists", "POST",
                             json.dumps({"email": ident}), "application/json")
        site.probe = {"snapshot": target_page, "requests": [probe]}
        site.expect = "existence"
    elif special == "captcha":
        site.expect = "captcha"
    else:
        site.submission = {"snapshot": target_page, "target": target, "requests": reqs}
        site.expect = "submit"
    site.note = f"{entry}/{style}/{dest}/{special or provider}"


def build_failure_site(site, kind, world, provider):
    """Login-enabled pages the detector is expected to miss."""
    rng = site.rng
    site.has_login = True
    landing = site.page("/")
    world.cdn_host(site.host, provider) if provider else world.origin_host(site.host)
    site.note = "miss/" + kind
    login_page = None
    if kind == "below_fold":
        # Long landing page with the only login form far below the first screen.
        header(landing, site)
        main = content(landing, site, rng, paragraphs=6)
        login_form(landing, main, 1900, button="Log in")
        footer(landing, 2500)
        return
    if kind == "german":
        entrance = header(landing, site, [(("a", [("href", "/anmelden"), ("class", "nav-link")]),
                                           "Anmelden", (24, 1600, 120, 32))])
        content(landing, site, rng)
        footer(landing)
        login_page = site.page("/anmelden")
        header(login_page, site)
        login_form(login_page, login_page.body, 200, button="Anmelden")
        site.link(landing, landing.nodes[entrance - 1]["children"][-1], login_page)
        return
    if kind == "icon_only":
        hdr = header(landing, site)
        a = landing.add(hdr, "a", [("href", "/u/"), ("class", "icon-link"), ("title", "")],
                        "", (24, 1680, 32, 32))
        landing.add(a, "svg", [("class", "icon icon-person"), ("viewBox", "0 0 24 24")], "",
                    (24, 1680, 32, 32), interactive=False)
        content(landing, site, rng)
        footer(landing)
        login_page = site.page("/u/")
        login_form(login_page, login_page.body, 200)
        site.link(landing, a, login_page)
        return
    if kind == "script_menu":
        # The menu entries are injected by script when the burger opens.
        hdr = header(landing, site)
        landing.add(hdr, "button", [("class", "burger"), ("aria-label", "Menu"),
                                    ("aria-expanded", "false")], "", (20, 1820, 40, 40))
        content(landing, site, rng)
        footer(landing)
        return
    if kind == "email_first":
        header(landing, site)
        main = content(landing, site, rng)
        box = landing.add(main, "form", [("id", "identify"), ("action", "/identify")],
                          bbox=(420, 760, 400, 160))
        landing.add(box, "input", [("type", "email"), ("name", "email"),
                                   ("placeholder", "Enter your email")], "", (440, 760, 400, 40))
        landing.add(box, "button", [("type", "submit")], "Next", (500, 760, 400, 44))
        footer(landing)
        return
    if kind == "depth3":
        hdr = header(landing, site, [(("a", [("href", "/my"), ("class", "nav-link")]),
                                      "My Account", (24, 1600, 120, 32))])
        content(landing, site, rng)
        footer(landing)
        p1 = site.page("/my")
        header(p1, site)
        s1 = p1.add(p1.body, "a", [("href", "/my/options")], "Sign in options", (200, 760, 300, 30))
        p2 = site.page("/my/options")
        header(p2, site)
        s2 = p2.add(p2.body, "a", [("href", "/my/login")], "Continue with email", (200, 760, 300, 30))
        p3 = site.page("/my/login")
        login_form(p3, p3.body, 200)
        site.link(landing, landing.nodes[hdr - 1]["children"][-1], p1)
        site.link(p1, s1, p2)
        site.link(p2, s2, p3)
        return
    if kind == "hdrlogin":
        hdr = header(landing, site)
        a = landing.add(hdr, "a", [("id", "hdrlogin"), ("class", "hdrbtn"),
                                   ("href", "javascript:void(0)")], "", (24, 1700, 36, 36))
        landing.add(a, "i", [("class", "ico ico-key")], "", (30, 1706, 24, 24), interactive=False)
        content(landing, site, rng)
        footer(landing)
        return
    if kind == "login_help":
        hdr = header(landing, site, [(("a", [("href", "/support/access"), ("class", "nav-link")]),
                                      "Login / Help", (24, 1600, 140, 32))])
        content(landing, site, rng)
        footer(landing)
        p1 = site.page("/support/access")
        login_form(p1, p1.body, 200)
        site.link(landing, landing.nodes[hdr - 1]["children"][-1], p1)
        return
    raise ValueError(kind)


def build_plain_site(site, kind, world, provider):
    """Pages without a login."""
    rng = site.rng
    if provider:
        world.cdn_host(site.host, provider, "rdap" if provider == "Cloudflare" and site.index % 2 else "cname")
    else:
        world.origin_host(site.host, rng.choice(sorted(ORIGINS)))
    landing = site.page("/")
    site.note = "plain/" + kind
    if kind == "newsletter":
        header(landing, site)
        main = content(landing, site, rng)
        box = landing.add(main, "form", [("class", "newsletter")], bbox=(500, 40, 600, 120))
        landing.add(box, "input", [("type", "email"), ("name", "newsletter_email"),
                                   ("placeholder", "Your email")], "", (520, 40, 400, 40))
        landing.add(box, "button", [("type", "submit")], "Sign up", (520, 460, 120, 40))
    elif kind == "docs":
        hdr = header(landing, site)
        for i, text in enumerate(["User Guide", "Help Center", "Status"]):
            landing.add(hdr, "a", [("href", f"/{text.split()[0].lower()}")], text,
                        (24, 1400 + 140 * i, 120, 24))
        content(landing, site, rng)
    elif kind == "search":
        header(landing, site)
        main = content(landing, site, rng, paragraphs=1)
        landing.add(main, "input", [("type", "search"), ("name", "q"), ("placeholder", "Search")],
                    "", (260, 560, 800, 48))
        landing.add(main, "button", [("type", "submit"), ("aria-label", "Search")], "Go",
                    (260, 1370, 80, 48))
    elif kind == "register":
        hdr = header(landing, site)
        landing.add(hdr, "a", [("href", "/join"), ("class", "cta")], "Sign up free", (24, 1600, 140, 32))
        main = content(landing, site, rng)
        landing.add(main, "button", [("class", "cta-large")], "Register now", (460, 40, 240, 56))
    elif kind == "contact":
        hdr = header(landing, site)
        # A mailto link: clicking it does not navigate.
        landing.add(hdr, "a", [("href", f"mailto:hello@{site.domain}")], "Email us", (24, 1600, 120, 24))
        main = content(landing, site, rng)
        box = landing.add(main, "form", [("action", "/contact")], bbox=(420, 40, 600, 400))
        landing.add(box, "input", [("type", "text"), ("name", "name"), ("placeholder", "Name")], "",
                    (440, 40, 400, 40))
        landing.add(box, "input", [("type", "email"), ("name", "email"), ("placeholder", "Email")],
                    "", (490, 40, 400, 40))
        landing.add(box, "textarea", [("name", "message")], "", (540, 40, 600, 160))
        landing.add(box, "button", [("type", "submit")], "Send message", (720, 40, 200, 44))
    elif kind == "member_benefits":
        hdr = header(landing, site)
        benefits = landing.add(hdr, "a", [("href", "/benefits")], "Member benefits", (24, 1600, 160, 24))
        content(landing, site, rng)
        p1 = site.page("/benefits")
        header(p1, site)
        content(p1, site, rng, paragraphs=4)
        footer(p1)
        site.link(landing, benefits, p1)
    elif kind == "forgot":
        hdr = header(landing, site)
        landing.add(hdr, "a", [("href", "/reset")], "Forgot password?", (24, 1600, 160, 24))
        content(landing, site, rng)
    elif kind == "shop":
        header(landing, site)
        main = content(landing, site, rng, paragraphs=1)
        for i in range(4):
            card = landing.add(main, "div", [("class", "product-card")], bbox=(300, 40 + 460 * i, 420, 500))
            landing.add(card, "h3", [], f"Product {i + 1}", (320, 60 + 460 * i, 380, 24))
            landing.add(card, "button", [("class", "add-to-cart")], "Add to cart",
                        (740, 60 + 460 * i, 200, 40))
    elif kind == "comments":
        header(landing, site)
        main = content(landing, site, rng, paragraphs=5)
        box = landing.add(main, "form", [("id", "commentform")], bbox=(560, 40, 700, 500))
        landing.add(box, "label", [("for", "author")], "Name", (570, 40, 200, 20))
        landing.add(box, "input", [("id", "author"), ("name", "author"), ("type", "text")], "",
                    (594, 40, 400, 40))
        landing.add(box, "label", [("for", "mail")], "Email (will not be published)", (650, 40, 300, 20))
        landing.add(box, "input", [("id", "mail"), ("name", "email"), ("type", "email")], "",
                    (674, 40, 400, 40))
        landing.add(box, "textarea", [("name", "comment")], "", (730, 40, 600, 160))
        landing.add(box, "input", [("type", "submit"), ("value", "Post Comment")], "",
                    (900, 40, 200, 44))
    elif kind == "app":
        header(landing, site)
        main = content(landing, site, rng, paragraphs=2)
        landing.add(main, "a", [("href", "https://apps.apple.example/app")], "Download on the App Store",
                    (400, 40, 200, 60))
        landing.add(main, "a", [("href", "https://play.example/store")], "Get it on Google Play",
                    (400, 260, 200, 60))
    elif kind == "hidden_login_below":
        # Hidden tracking pixel and a login box well below the fold; nothing to submit on screen.
        header(landing, site)
        content(landing, site, rng)
        landing.add(landing.body, "img", [("src", "/px.gif"), ("alt", "")], "", (0, 0, 0, 0),
                    interactive=False)
    else:
        raise ValueError(kind)
    footer(landing)


# ---------------------------------------------------------------------------


LOGIN_SPECS = [
    # entry, account, style, dest, provider, extras
    dict(entry="direct", account="email", style="json", provider="Cloudflare"),
    dict(entry="link", account="email", style="form", provider="Akamai", entrance="Log in"),
    dict(entry="link", account="username", style="multipart", provider="Fastly", entrance="Sign in"),
    dict(entry="link", account="email", style="b64json", provider="Cloudflare", basis="rdap",
         entrance="Login"),
    dict(entry="modal", account="email", style="json_escaped", provider="Cloudflare",
         entrance="Sign In"),
    dict(entry="menu2", account="email", style="form", provider="Akamai", entrance="Account"),
    dict(entry="iframe", account="username", style="form", provider="Incapsula", dest="frame",
         frame_provider="Incapsula", entrance="Sign in"),
    dict(entry="link", account="email", style="query", provider="Highwinds", entrance="Log In"),
    dict(entry="link", account="login", style="b64url_form", provider="Edgecast", entrance="Sign-in"),
    dict(entry="direct", account="email", style="b64nopad_json", provider="Quantil"),
    dict(entry="link", account="email", style="form_plain", provider="CDNetworks", entrance="Log in"),
    dict(entry="link", account="username", style="json", provider="Limelight", entrance="My Account"),
    dict(entry="link", account="email", style="form", provider="Cloudflare", dest="api",
         entrance="Log in", preflight=True),
    dict(entry="link", account="email", style="json", provider="Fastly", dest="api",
         entrance="Sign in", beacon=True),
    dict(entry="direct", account="username", style="form", provider="Cloudflare", basis="rdap"),
    dict(entry="modal", account="email", style="multipart", provider="Akamai", entrance="Login"),
    dict(entry="link", account="email", style="json", provider="Cloudflare", entrance="Member login"),
    dict(entry="menu2", account="username", style="b64json", provider="Fastly", entrance="Account"),
    dict(entry="link", account="email", style="json_escaped", provider="Akamai", entrance="Sign in"),
    dict(entry="link", account="login", style="form", provider="Incapsula", entrance="Log in"),
    dict(entry="link", account="email", style="form", provider="Cloudflare", entrance="Log in",
         register_form=True),
    dict(entry="iframe", account="email", style="json", provider="Cloudflare", dest="frame",
         frame_provider="Cloudflare", entrance="Sign in"),
    dict(entry="direct", account="email", style="form", provider="Fastly", beacon=True),
    dict(entry="link", account="email", style="json", provider="Akamai", entrance="Account"),
    dict(entry="link", account="username", style="form", provider="Cloudflare", entrance="Sign in",
         beacon=True),
    dict(entry="link", account="email", style="b64json", provider="Akamai", entrance="Log in"),
    dict(entry="modal", account="email", style="form", provider="Cloudflare", entrance="Log in"),
    # Client-side encryption: no recoverable password.
    dict(entry="link", account="email", style="encrypted", provider="Cloudflare", entrance="Log in"),
    dict(entry="link", account="username", style="encrypted", provider="Akamai", dest="api",
         entrance="Sign in"),
    dict(entry="direct", account="email", style="encrypted", provider="Fastly"),
    dict(entry="modal", account="email", style="encrypted", provider="Cloudflare", basis="rdap",
         entrance="Sign in"),
    dict(entry="link", account="email", style="encrypted", provider="Incapsula", entrance="Login"),
    # Credentials go to an origin host while the site itself is on a CDN.
    dict(entry="link", account="email", style="form", provider="Cloudflare", dest="bypass",
         entrance="Log in"),
    dict(entry="link", account="username", style="json", provider="Akamai", dest="bypass",
         entrance="Sign in"),
    dict(entry="iframe", account="email", style="form", provider="Fastly", dest="frame",
         entrance="Log in"),
    dict(entry="direct", account="email", style="multipart", provider="Edgecast", dest="bypass"),
    # No CDN in front of the site at all.
    dict(entry="link", account="email", style="form", provider=None, entrance="Log in", origin="hetzner"),
    dict(entry="direct", account="username", style="json", provider=None, origin="ovh"),
    dict(entry="link", account="email", style="query", provider=None, entrance="Sign in"),
    dict(entry="iframe", account="email", style="json", provider=None, dest="frame", entrance="Login"),
    # Skipped before the password is sent.
    dict(entry="link", account="email", style="form", provider="Cloudflare", special="captcha",
         entrance="Log in"),
    dict(entry="direct", account="email", style="json", provider="Akamai", special="captcha"),
    dict(entry="link", account="email", style="json", provider="Fastly", special="existence",
         entrance="Sign in"),
    dict(entry="link", account="email", style="form", provider="Cloudflare", special="existence",
         entrance="Log in"),
    dict(entry="link", account="username", style="form", provider="Limelight", entrance="Sign in"),
]

MISSES = ["below_fold", "german", "icon_only", "script_menu", "email_first", "depth3", "hdrlogin",
          "login_help"]
PLAIN = ["newsletter", "docs", "search", "register", "contact", "member_benefits", "forgot", "shop",
         "comments", "app", "hidden_login_below"]


def dns_provider_for(site, world, rng):
    if site.note.startswith("plain") or site.has_login:
        provider = world.truth.get(site.host)
        if provider == "Cloudflare" and rng.random() < 0.6:
            world.ns(site.domain, ["kim.ns.cloudflare.com", "lars.ns.cloudflare.com"])
            return "Cloudflare"
        if provider == "Akamai" and rng.random() < 0.3:
            world.ns(site.domain, ["a1-64.akam.net", "a7-67.akam.net"])
            return "Akamai"
    world.ns(site.domain, ["ns1.dnshost-fixture.example", "ns2.dnshost-fixture.example"])
    return None


def expected_record(site, dns_provider, world):
    landing = site.url if not site.pages else site.pages[0].url
    record = {"domain": site.domain, "rank": site.rank, "https": site.https,
              "login_detected": site.expect == "submit", "cdn_providers": [],
              "verdict": {"kind": "LoginNotFound", "provider": None, "evidence": None, "error": None},
              "dns_provider": dns_provider if site.https else None, "category": site.category}
    if not site.https:
        record["verdict"]["kind"] = "NoHTTPS"
        return record
    providers = set()
    if world.truth.get(host_of(landing)):
        providers.add(world.truth[host_of(landing)])
    if site.expect == "submit":
        reqs = site.submission["requests"]
        for r in reqs:
            p = world.truth[host_of(r["url"])]
            if p and credential_bearing(r, site.creds):
                providers.add(p)
        record["verdict"] = classify(reqs, site.creds, world.truth)
    record["cdn_providers"] = sorted(providers)
    return record


def request_json(r, stamp):
    body = base64.b64encode(r["_body"].encode()).decode()
    return {"url": r["url"], "method": r["method"], "headers": r["headers"], "body": body,
            "destination_host": host_of(r["url"]), "tls": r["url"].startswith("https"),
            "timestamp": stamp}


def write_bundle(root, site, record):
    d = root / "sites" / site.domain
    (d / "snapshots").mkdir(parents=True)
    (d / "requests").mkdir()
    (d / "expected").mkdir()
    manifest = {"site": site.domain, "rank": site.rank, "https": site.https, "url": site.url,
                "has_login": site.has_login, "category": site.category,
                "credentials": {"account": site.creds["account"], "password": site.creds["password"]}}
    if site.http_status != 200:
        manifest["http_status"] = site.http_status
    names = []
    for i, page in enumerate(site.pages):
        name = f"snapshots/{i:02d}.snapshot.json"
        (d / name).write_text(json.dumps(page.to_json(), separators=(",", ":")) + "\n")
        names.append(name)
    manifest["snapshots"] = names
    manifest["node_counts"] = [count_nodes(p) for p in site.pages]
    manifest["filtered"] = [filtered_refs(p) for p in site.pages]
    if site.ground_truth:
        manifest["ground_truth"] = site.ground_truth
    manifest["transitions"] = site.transitions
    n = 0

    def dump(reqs):
        nonlocal n
        paths = []
        for r in reqs:
            name = f"requests/{n:02d}.request.json"
            stamp = f"2020-10-05T09:{site.index % 60:02d}:{40 + n:02d}.{100 + n}Z"
            (d / name).write_text(json.dumps(request_json(r, stamp), indent=1) + "\n")
            paths.append(name)
            n += 1
        return paths

    if site.probe:
        manifest["account_probe"] = [{"snapshot": site.probe["snapshot"],
                                      "requests": dump(site.probe["requests"])}]
    if site.submission:
        manifest["submission"] = {"snapshot": site.submission["snapshot"],
                                  "target": site.submission["target"],
                                  "requests": dump(site.submission["requests"])}
    manifest["note"] = site.note
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    (d / "expected" / "site_record.json").write_text(json.dumps(record, indent=1) + "\n")


def count_nodes(page):
    return len(page.nodes)


CANDIDATE_TAGS = {"input", "button", "label", "a", "iframe"}


def preorder(page):
    out, stack = [], [page.html]
    while stack:
        nid = stack.pop()
        out.append(page.nodes[nid - 1])
        stack.extend(reversed(page.nodes[nid - 1]["children"]))
    return out


def filtered_refs(page):
    """Candidate elements within 1.5 viewports, frame contents after their iframe."""
    fold = 1.5 * VIEWPORT[1]
    refs = []
    for node in preorder(page):
        if node["tag"] in CANDIDATE_TAGS and node["bbox"][0] <= fold:
            refs.append(str(node["id"]))
        if node["tag"] == "iframe" and node["frame"] is not None:
            for inner in preorder(node["frame"]):
                if inner["tag"] in CANDIDATE_TAGS and node["bbox"][0] + inner["bbox"][0] <= fold:
                    refs.append(f"{node['id']}/{inner['id']}")
    return refs


def build_corpus(root, seed):
    rng = random.Random(seed)
    world = World()
    kinds = ([("login", s) for s in LOGIN_SPECS] + [("miss", m) for m in MISSES] +
             [("plain", PLAIN[i % len(PLAIN)]) for i in range(45)] + [("noauth", None), ("http", None)])
    assert len(kinds) == 100 and sum(k[0] in ("login", "miss") for k in kinds) == 53
    rng.shuffle(kinds)
    ranks = sorted(rng.sample(range(1, 50001), 100))
    plain_providers = ["Cloudflare", "Cloudflare", "Akamai", "Fastly", None, None, "Incapsula",
                       "Edgecast", None, "Cloudflare", "Highwinds"]
    miss_providers = ["Cloudflare", "Akamai", None, "Fastly", "Cloudflare", None, "Quantil", "Akamai"]

    sites = []
    for i, (kind, spec) in enumerate(kinds, start=1):
        category = CATEGORIES[rng.randrange(len(CATEGORIES))] if rng.random() < 0.85 else None
        site = Site(i, ranks[i - 1], category, random.Random(rng.getrandbits(64)))
        if kind == "login":
            build_login_site(site, spec, world)
        elif kind == "miss":
            build_failure_site(site, spec, world, miss_providers[MISSES.index(spec)])
        elif kind == "plain":
            build_plain_site(site, spec, world, plain_providers[i % len(plain_providers)])
        elif kind == "noauth":
            site.http_status = 401
            site.note = "http-auth"
            world.cdn_host(site.host, "Akamai")
            p = site.page("/")
            p.add(p.body, "h1", [], "401 Authorization Required", (20, 20, 600, 40))
        else:
            site.https = False
            site.note = "no-https"
            world.origin_host(site.host, "ovh")
            p = site.page("/")
            header(p, site)
            content(p, site, site.rng)
        dns = dns_provider_for(site, world, rng)
        sites.append((site, expected_record(site, dns, world)))

    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)
    for site, record in sites:
        write_bundle(root, site, record)
    (root / "dns.json").write_text(json.dumps(dict(sorted(world.dns.items())), indent=1) + "\n")
    (root / "rdap.json").write_text(json.dumps(dict(sorted(world.rdap.items())), indent=1) + "\n")
    with open(root / "input.csv", "w") as f:
        f.write("rank,domain\n")
        for site, _ in sites:
            f.write(f"{site.rank},{site.domain}\n")
    with open(root / "expected.jsonl", "w") as f:
        for _, record in sites:
            f.write(json.dumps(record) + "\n")
    summary = {"sites": len(sites), "login": sum(s.has_login for s, _ in sites),
               "expected_submissions": sum(s.expect == "submit" for s, _ in sites),
               "expected_attempts": sum(s.expect in ("submit", "captcha", "existence")
                                        for s, _ in sites)}
    (root / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary


# ---------------------------------------------------------------------------
# Attribution fixture: one CNAME-fronted host per provider, a few hosts that
# only RDAP can place, and random hosts that belong to no CDN.


def build_attribution(root, seed):
    rng = random.Random(seed + 1)
    world = World()
    cases = []
    for provider in PROVIDERS:
        host = f"www.{provider.lower()}-customer.example"
        world.cdn_host(host, provider, "cname")
        cases.append({"host": host, "provider": provider, "basis": "cname"})
    for provider in ["Cloudflare", "Akamai", "Fastly"]:
        host = f"shop.{provider.lower()}-anycast.example"
        world.cdn_host(host, provider, "rdap")
        cases.append({"host": host, "provider": provider, "basis": "rdap"})
    tlds = ["com", "net", "org", "io", "example", "co.uk", "de"]
    for i in range(20):
        label = "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(5, 12)))
        host = f"{rng.choice(['www.', 'app.', 'static.', ''])}{label}.{rng.choice(tlds)}"
        shape = i % 4
        if shape == 0:
            world.origin_host(host, rng.choice(sorted(ORIGINS)))
        elif shape == 1:
            target = f"{label}.herokudns-fixture.example"
            world.cname(host, target)
            world.a(target, [world.origin_address(rng.choice(sorted(ORIGINS)))])
        elif shape == 2:
            world.a(host, [world.origin_address("aws")])
            world.rdap[world.dns[f"{host} A"]["records"][0]] = {"error": "rate limited"}
        # shape 3: not in the zone at all (NXDOMAIN)
        cases.append({"host": host, "provider": None, "basis": None})
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)
    (root / "dns.json").write_text(json.dumps(dict(sorted(world.dns.items())), indent=1) + "\n")
    (root / "rdap.json").write_text(json.dumps(dict(sorted(world.rdap.items())), indent=1) + "\n")
    (root / "cases.json").write_text(json.dumps(cases, indent=1) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=53)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    summary = build_corpus(out / "corpus", args.seed)
    build_attribution(out / "attribution", args.seed)
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
