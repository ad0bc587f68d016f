"""Paraphrase collection from an HTTP chat-completion service, plus a local
mock server used by the tests."""

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import List, Optional, Sequence

import httpx

from .corpusio import ParaphraseRecord, write_paraphrase_records

log = logging.getLogger(__name__)

API_KEY_ENV = "SEMINFO_API_KEY"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"template {self.name!r} is empty")

    def render(self, lang, sentence):
        return self.text.replace("{lang}", lang) + "\n\n" + sentence


_USE_SAME = "Use the same word as in the original sentence."

TEMPLATES = [
    PromptTemplate("shuffle", "Create grammatical sentences by shuffling the phrases in the below sentence. The generated sentences must be in {lang}. Use the same word as in the original sentence"),
    PromptTemplate("tense", "Create grammatical sentences by changing the tense in the below sentence. The generated sentences must be in {lang}. " + _USE_SAME),
    PromptTemplate("passive", "Create grammatical sentences by restating the below sentences in passive voice. The generated sentences must be in {lang}. " + _USE_SAME),
    PromptTemplate("active", "Create grammatical sentences by restating the below sentences in active voice. The generated sentences must be in {lang}. " + _USE_SAME),
    PromptTemplate("cleft", "Create grammatical clefting sentences based on the below sentence. The generated sentences must be in {lang}. " + _USE_SAME),
    PromptTemplate("wh-question", "Create pairs of interrogative and its answers based on the below sentence. The generated sentences must be grammatically correct and be explicit. The sentences must be in {lang}. Use the same word as in the original sentence. The answer to the questions should be a substring of the given sentence."),
    PromptTemplate("confirm-question", "Create pairs of confirmatory questions and its answers based on the below sentence. The generated sentences must be grammatically correct and textually diverse. The sentences must be in {lang}. Use the same word as in the original sentence. The answer to the questions should be a substring of the given sentence."),
    PromptTemplate("topicalization", "Create grammatical sentences by performing the topicalization transformation to the below sentence. The sentences must be in {lang}. " + _USE_SAME),
    PromptTemplate("heavy-np-shift", "Create grammatical sentences by performing the heavy NP shift transformation to the below sentence. The sentences must be in {lang}. " + _USE_SAME),
]
DEFAULT_TEMPLATES = TEMPLATES[:8]


def select_templates(names: Optional[Sequence[str]] = None) -> List[PromptTemplate]:
    if not names:
        return list(DEFAULT_TEMPLATES)
    by_name = {t.name: t for t in TEMPLATES}
    missing = [n for n in names if n not in by_name]
    if missing:
        raise ValueError(f"unknown template(s) {missing}; available: {sorted(by_name)}")
    return [by_name[n] for n in names]


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)]|[A-Za-z][.):]\s)\s*")


def split_candidates(text: str) -> List[str]:
    """Completion text -> one candidate per non-empty line, list markers removed."""
    out = []
    for line in text.splitlines():
        line = _BULLET.sub("", line, count=1).strip()
        if line:
            out.append(line)
    return out


class QuotaExceeded(RuntimeError):
    pass


class RequestFailed(RuntimeError):
    def __init__(self, status, message):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


def _is_quota(resp):
    if resp.status_code == 402:
        return True
    if resp.status_code == 429:
        try:
            err = resp.json().get("error", {})
        except ValueError:
            return False
        code = err.get("code") if isinstance(err, dict) else None
        return code == "insufficient_quota"
    return False


def _request(client, endpoint, body, headers, retries, backoff):
    delay = backoff
    for attempt in range(retries + 1):
        try:
            resp = client.post(endpoint, json=body, headers=headers)
        except httpx.TransportError as e:
            if attempt == retries:
                raise RequestFailed("transport", str(e)) from None
        else:
            if resp.status_code == 200:
                return resp.json()
            if _is_quota(resp):
                raise QuotaExceeded(resp.text[:200])
            if resp.status_code not in (408, 409, 429) and resp.status_code < 500:
                raise RequestFailed(resp.status_code, resp.text[:200])
            if attempt == retries:
                raise RequestFailed(resp.status_code, resp.text[:200])
        time.sleep(delay)
        delay *= 2
    raise AssertionError("unreachable")


def _complete(client, endpoint, model, prompt, n, headers, retries, backoff):
    body = {"model": model, "messages": [{"role": "user", "content": prompt}], "n": n}
    data = _request(client, endpoint, body, headers, retries, backoff)
    out = []
    for choice in data.get("choices", []):
        out += split_candidates(choice.get("message", {}).get("content", ""))
    return out


def _load_progress(path):
    done = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    done[obj["id"]] = obj["paraphrases"]
    return done


def fetch_paraphrases(endpoint, model, sentences, out_path, templates=None, lang="English",
                      samples_per_prompt=1, concurrency=4, retries=4, backoff=0.5, timeout=60.0, ids=None):
    """Collect paraphrases for ``sentences`` and write a paraphrase file.

    Completed sentences are appended to ``<out_path>.progress.jsonl`` so an
    interrupted run resumes where it stopped.  Failed requests are logged to
    ``<out_path>.errors.jsonl``; those sentences are retried on the next run.
    Raises QuotaExceeded after saving progress when the service reports an
    exhausted quota.  Returns the list of written records.
    """
    templates = select_templates() if templates is None else list(templates)
    ids = [f"s{k:06d}" for k in range(len(sentences))] if ids is None else list(ids)
    if len(ids) != len(sentences):
        raise ValueError("ids and sentences differ in length")
    progress_path = out_path + ".progress.jsonl"
    errors_path = out_path + ".errors.jsonl"
    done = _load_progress(progress_path)
    key = os.environ.get(API_KEY_ENV)
    headers = {"Authorization": f"Bearer {key}"} if key else {}
    if not key:
        log.warning("%s is not set; sending unauthenticated requests", API_KEY_ENV)

    todo = [k for k, sid in enumerate(ids) if sid not in done]
    lock = threading.Lock()
    quota = threading.Event()
    partial = {}

    def work(k):
        if quota.is_set():
            return
        sid, sent = ids[k], sentences[k]
        paras, errors = [], []
        for t in templates:
            if quota.is_set():
                return
            try:
                paras += _complete(client, endpoint, model, t.render(lang, sent), samples_per_prompt, headers, retries, backoff)
            except QuotaExceeded:
                quota.set()
                return
            except RequestFailed as e:
                errors.append({"id": sid, "template": t.name, "status": e.status, "error": str(e)})
        with lock:
            if errors:
                partial[sid] = paras
                with open(errors_path, "a", encoding="utf-8") as fh:
                    for rec in errors:
                        fh.write(json.dumps(rec) + "\n")
            else:
                done[sid] = paras
                with open(progress_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"id": sid, "paraphrases": paras}, ensure_ascii=False) + "\n")

    with httpx.Client(timeout=timeout) as client:
        with ThreadPoolExecutor(max(1, concurrency)) as pool:
            list(pool.map(work, todo))
    if quota.is_set():
        raise QuotaExceeded(f"service quota exhausted; {len(done)} of {len(ids)} sentences saved to {progress_path}, rerun to resume")
    records = [ParaphraseRecord(sid, s, done.get(sid, partial.get(sid, []))) for sid, s in zip(ids, sentences)]
    write_paraphrase_records(out_path, records)
    return records


# ---------------------------------------------------------------------------
# mock service


class MockChatServer:
    """Chat-completion stand-in: each reply repeats the prompt's last line
    ``echo`` times.  ``script`` is an optional list of status codes served
    (in order) before normal replies, for exercising retries and failures."""

    def __init__(self, echo=1, script=None, quota_after=None):
        self.echo = echo
        self.script = list(script or [])
        self.quota_after = quota_after
        self.requests = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()

    def _handler(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status, obj):
                data = json.dumps(obj).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_POST(self):
                raw = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                with mock._lock:
                    mock.requests.append({"body": raw.decode(), "headers": dict(self.headers)})
                    count = len(mock.requests)
                    status = mock.script.pop(0) if mock.script else 200
                if mock.quota_after is not None and count > mock.quota_after:
                    return self._send(429, {"error": {"code": "insufficient_quota", "message": "quota"}})
                if status != 200:
                    return self._send(status, {"error": {"code": "scripted", "message": f"status {status}"}})
                body = json.loads(raw)
                source = body["messages"][-1]["content"].rsplit("\n", 1)[-1]
                n = int(body.get("n", 1))
                content = "\n".join([source] * mock.echo)
                self._send(200, {"choices": [{"index": i, "message": {"role": "assistant", "content": content}} for i in range(n)]})

        return Handler
