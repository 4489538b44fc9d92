#!/usr/bin/env python3
"""End-to-end checks of the pulse_agent binary.

usage: cli_smoke.py PULSE_AGENT FIXTURE_DIR GOLDEN_REPORT SAMPLE_DIR
Bodies returned by the running service are written to SAMPLE_DIR for the
schema check.
"""
import json
import pathlib
import subprocess
import sys
import tempfile
import urllib.error
import urllib.request
import uuid

BIN, FIXTURES, GOLDEN, SAMPLES = sys.argv[1:5]
failures = []


def check(ok, what):
    print(("ok   " if ok else "FAIL ") + what)
    if not ok:
        failures.append(what)


def run(*args, **kw):
    return subprocess.run([BIN, *args], capture_output=True, text=True, timeout=120, **kw)


def http(method, url, body=None, headers=None):
    req = urllib.request.Request(url, data=body, method=method, headers=headers or {})
    try:
        with urllib.request.urlopen(req, timeout=30) as r:
            return r.status, r.read().decode()
    except urllib.error.HTTPError as e:
        return e.code, e.read().decode()


def multipart(fields, filename, content):
    boundary = uuid.uuid4().hex
    parts = []
    for k, v in fields.items():
        parts.append(f'--{boundary}\r\nContent-Disposition: form-data; name="{k}"\r\n\r\n{v}\r\n')
    parts.append(f'--{boundary}\r\nContent-Disposition: form-data; name="file"; filename="{filename}"\r\n'
                 f'Content-Type: text/csv\r\n\r\n{content}\r\n--{boundary}--\r\n')
    return "".join(parts).encode(), {"Content-Type": f"multipart/form-data; boundary={boundary}"}


def main():
    samples = pathlib.Path(SAMPLES)
    samples.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)

        # evaluate on the golden corpus
        store = tmp / "golden-store"
        r = run("--data-root", str(store), "synth", "--recordings", "4", "--users", "2", "--duration", "300",
                "--seed", "7")
        check(r.returncode == 0, "synth exits 0")
        r = run("--data-root", str(store), "evaluate", "--out", str(tmp / "out"))
        check(r.returncode == 0 and "paired windows" in r.stdout, "evaluate exits 0 with a summary")
        report = (tmp / "out" / "report.json").read_bytes()
        check(report == pathlib.Path(GOLDEN).read_bytes(), "report.json matches the golden file")
        (samples / "report.json").write_bytes(report)
        check((tmp / "out" / "scatter.csv").read_text().startswith("y,y_hat\n"), "scatter.csv written")

        # error paths
        bad = tmp / "bad.csv"
        bad.write_text("t_offset_s,value\n0,1.0\n0.05,oops\n")
        r = run("--data-root", str(tmp / "s2"), "ingest", str(bad), "--user", "u1", "--start", "0", "--rate", "20")
        check(r.returncode == 1 and "ParseError" in r.stderr, "malformed CSV is a ParseError")
        r = run("evaluate", "--out", str(tmp / "x"))
        check(r.returncode == 1 and "InvalidArgument" in r.stderr, "missing data root is rejected")
        r = run("--data-root", str(tmp / "empty"), "evaluate", "--out", str(tmp / "x"))
        check(r.returncode == 1 and "EmptyCorpus" in r.stderr, "empty store is an EmptyCorpus")

        # ingest
        good = tmp / "good.csv"
        good.write_text("t_offset_s,value\n" + "".join(f"{i / 20:.2f},{2000 + (i % 7)}\n" for i in range(2400)))
        r = run("--data-root", str(tmp / "s3"), "ingest", str(good), "--user", "u1", "--start",
                "2019-07-25T08:00", "--rate", "20")
        check(r.returncode == 0 and json.loads(r.stdout).get("duration_s") == 120, "ingest prints the metadata")

        # serve the transcript store with the mock backend
        agent_store = tmp / "agent-store"
        check(run("--data-root", str(agent_store), "synth", "--recordings", "3", "--users", "2").returncode == 0,
              "agent store seeded")
        proc = subprocess.Popen([BIN, "--config", f"{FIXTURES}/config.json", "--data-root", str(agent_store),
                                 "serve", "--port", "0"], stdout=subprocess.PIPE, text=True)
        try:
            line = proc.stdout.readline()
            check(line.startswith("listening on http://"), "serve reports its address")
            base = line.split()[-1]
            status, body = http("GET", base + "/v1/healthz")
            check(status == 200 and json.loads(body) == {"status": "ok"}, "healthz")
            status, body = http("POST", base + "/v1/sessions")
            check(status == 201, "session created")
            sid = json.loads(body)["session_id"]
            q = "What was the average heart rate of user s01 on 2019-07-25 at 08:05 from PPG?"
            status, body = http("POST", f"{base}/v1/sessions/{sid}/query", json.dumps({"text": q}).encode(),
                                {"Content-Type": "application/json"})
            check(status == 200 and "<hr>" in json.loads(body)["text"], "scripted query answered")
            (samples / "agent_response.json").write_text(body)
            status, body = http("GET", base + "/v1/users/s01/recordings")
            check(status == 200 and len(json.loads(body)) == 4, "s01 has two paired recordings")
            status, body = http("GET", base + "/v1/users/nobody/recordings")
            check(status == 404 and json.loads(body)["code"] == "UserNotFound", "unknown user is 404")
            (samples / "error.json").write_text(body)
            data, headers = multipart({"user_id": "u9", "modality": "PPG", "start": "2019-07-30T08:00",
                                       "rate_hz": "20"}, "u9.csv", good.read_text())
            status, body = http("POST", base + "/v1/recordings", data, headers)
            check(status == 201 and json.loads(body)["user_id"] == "u9", "upload accepted")
            (samples / "recording_meta.json").write_text(body)
        finally:
            proc.terminate()
            try:
                code = proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
                code = None
        check(code == 0, "serve stops cleanly on SIGTERM")

    print(f"{len(failures)} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
