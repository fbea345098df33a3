"""Deterministic mini git repositories backing the pipeline fixtures.

All commit metadata (author, committer, dates, messages) is pinned, so the
commit ids are identical on every machine and every run. The bundled fixture
corpus references those ids.
"""

from __future__ import annotations

import subprocess
from pathlib import Path

_BASE_ENV = {
    "GIT_AUTHOR_NAME": "Fixture Author",
    "GIT_AUTHOR_EMAIL": "fixture@example.org",
    "GIT_COMMITTER_NAME": "Fixture Author",
    "GIT_COMMITTER_EMAIL": "fixture@example.org",
    "PATH": "/usr/bin:/bin:/usr/local/bin",
    "HOME": "/tmp",
    "LC_ALL": "C",
}


def _git(repo: Path, *args: str, date: str | None = None) -> str:
    env = dict(_BASE_ENV)
    if date is not None:
        env["GIT_AUTHOR_DATE"] = date
        env["GIT_COMMITTER_DATE"] = date
    proc = subprocess.run(
        ["git", "-C", str(repo), *args], check=True, env=env, capture_output=True, text=True
    )
    return proc.stdout


def _init(repo: Path) -> None:
    repo.mkdir(parents=True, exist_ok=True)
    subprocess.run(
        ["git", "init", "-q", "-b", "main", str(repo)],
        check=True,
        env=_BASE_ENV,
        capture_output=True,
    )


def _commit_all(repo: Path, message: str, date: str) -> str:
    _git(repo, "add", "-A")
    _git(repo, "commit", "-q", "-m", message, date=date)
    return _git(repo, "rev-parse", "HEAD").strip()


def _write(repo: Path, rel: str, text: str) -> None:
    path = repo / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))


X509_PROVIDER_BUGGY = """\
package org.apache.zookeeper.server.auth;

import org.apache.zookeeper.common.X509Util;

public class X509AuthenticationProvider {
    static final String ZK_SSL_KEYSTORE_LOCATION = "zookeeper.ssl.keyStore.location";
    static final String ZK_SSL_KEYSTORE_PASSWORD = "zookeeper.ssl.keyStore.password";
    static final String ZK_SSL_TRUSTSTORE_LOCATION = "zookeeper.ssl.trustStore.location";

    private final Object keyManager;
    private final Object trustManager;

    public X509AuthenticationProvider() {
        String keyStoreLocation = System.getProperty(ZK_SSL_KEYSTORE_LOCATION);
        String keyStorePassword = System.getProperty(ZK_SSL_KEYSTORE_PASSWORD);
        keyManager = X509Util.createKeyManager(keyStoreLocation, keyStorePassword);
        String trustStoreLocation = System.getProperty(ZK_SSL_TRUSTSTORE_LOCATION);
        trustManager = X509Util.createTrustManager(trustStoreLocation);
    }

    public String getScheme() {
        return "x509";
    }
}
"""

X509_PROVIDER_FIXED = """\
package org.apache.zookeeper.server.auth;

import org.apache.zookeeper.common.X509Util;

public class X509AuthenticationProvider {
    static final String ZK_SSL_KEYSTORE_LOCATION = "zookeeper.ssl.keyStore.location";
    static final String ZK_SSL_KEYSTORE_PASSWORD = "zookeeper.ssl.keyStore.password";
    static final String ZK_SSL_TRUSTSTORE_LOCATION = "zookeeper.ssl.trustStore.location";

    private final Object keyManager;
    private final Object trustManager;

    public X509AuthenticationProvider() {
        String keyStoreLocation = System.getProperty(ZK_SSL_KEYSTORE_LOCATION);
        String keyStorePassword = System.getProperty(ZK_SSL_KEYSTORE_PASSWORD);
        if (keyStoreLocation == null || keyStorePassword == null) {
            throw new IllegalArgumentException("keystore location and password must be configured");
        }
        keyManager = X509Util.createKeyManager(keyStoreLocation, keyStorePassword);
        String trustStoreLocation = System.getProperty(ZK_SSL_TRUSTSTORE_LOCATION);
        if (trustStoreLocation == null) {
            throw new IllegalArgumentException("truststore location must be configured");
        }
        trustManager = X509Util.createTrustManager(trustStoreLocation);
    }

    public String getScheme() {
        return "x509";
    }
}
"""

X509_UTIL = """\
package org.apache.zookeeper.common;

public class X509Util {

    public static Object createKeyManager(String keyStoreLocation, String keyStorePassword) {
        if (keyStoreLocation.isEmpty()) {
            return null;
        }
        return loadStore(keyStoreLocation, keyStorePassword);
    }

    public static Object createTrustManager(String trustStoreLocation) {
        if (trustStoreLocation.isEmpty()) {
            return null;
        }
        return loadStore(trustStoreLocation, "");
    }

    private static Object loadStore(String location, String password) {
        return location + ":" + password;
    }
}
"""

SERVER_CNXN_FACTORY = """\
package org.apache.zookeeper.server;

import org.apache.zookeeper.server.auth.X509AuthenticationProvider;

public class ServerCnxnFactory {
    private X509AuthenticationProvider authProvider;

    public void configureSecure() {
        authProvider = new X509AuthenticationProvider();
    }

    public boolean isSecure() {
        return authProvider != null;
    }
}
"""

QUORUM_CONFIG = """\
package org.apache.zookeeper.server.quorum;

public class QuorumConfig {
    private int tickTime = 2000;

    public int getTickTime() {
        return tickTime;
    }
}
"""

RING_BUFFER_BUGGY = """\
package org.example.queue;

public class RingBuffer {
    private final Object[] items = new Object[16];
    private int head;
    private int count;

    public void put(Object item) {
        items[(head + count) % items.length] = item;
        count++;
    }

    public Object take() {
        int idx = --count;
        Object item = items[idx];
        items[idx] = null;
        return item;
    }

    public int size() {
        return count;
    }
}
"""

RING_BUFFER_FIXED = """\
package org.example.queue;

public class RingBuffer {
    private final Object[] items = new Object[16];
    private int head;
    private int count;

    public void put(Object item) {
        items[(head + count) % items.length] = item;
        count++;
    }

    public Object take() {
        if (count == 0) {
            throw new IllegalStateException("buffer empty");
        }
        int idx = --count;
        Object item = items[idx];
        items[idx] = null;
        return item;
    }

    public int size() {
        return count;
    }
}
"""

QUEUE_WORKER = """\
package org.example.queue;

public class Worker {
    private final RingBuffer buffer = new RingBuffer();

    public Object poll() {
        return buffer.take();
    }

    public void offer(Object item) {
        buffer.put(item);
    }
}
"""


def build_zookeeper_mini(root: Path) -> dict[str, str]:
    """Three commits: buggy code, an unrelated addition, then the fix."""
    repo = root / "zookeeper-mini"
    _init(repo)
    base = "src/org/apache/zookeeper"
    _write(repo, f"{base}/server/auth/X509AuthenticationProvider.java", X509_PROVIDER_BUGGY)
    _write(repo, f"{base}/common/X509Util.java", X509_UTIL)
    _write(repo, f"{base}/server/ServerCnxnFactory.java", SERVER_CNXN_FACTORY)
    c1 = _commit_all(repo, "Initial secure connection support", "2016-09-01T10:00:00+00:00")
    _write(repo, f"{base}/server/quorum/QuorumConfig.java", QUORUM_CONFIG)
    c2 = _commit_all(repo, "Add quorum config holder", "2016-09-10T10:00:00+00:00")
    _write(repo, f"{base}/server/auth/X509AuthenticationProvider.java", X509_PROVIDER_FIXED)
    fix = _commit_all(
        repo, "Guard X509 provider against missing keystore config", "2016-09-20T10:00:00+00:00"
    )
    return {"repo": str(repo), "c1": c1, "c2": c2, "fix": fix}


def build_queuelib(root: Path) -> dict[str, str]:
    """Two commits: buggy ring buffer, then the guarded fix."""
    repo = root / "queuelib"
    _init(repo)
    _write(repo, "src/org/example/queue/RingBuffer.java", RING_BUFFER_BUGGY)
    _write(repo, "src/org/example/queue/Worker.java", QUEUE_WORKER)
    c1 = _commit_all(repo, "Initial ring buffer", "2018-03-01T09:00:00+00:00")
    _write(repo, "src/org/example/queue/RingBuffer.java", RING_BUFFER_FIXED)
    fix = _commit_all(repo, "Reject take() on an empty buffer", "2018-04-01T09:00:00+00:00")
    return {"repo": str(repo), "c1": c1, "fix": fix}


def build_all(root: Path) -> dict[str, dict[str, str]]:
    return {"zookeeper-mini": build_zookeeper_mini(root), "queuelib": build_queuelib(root)}


if __name__ == "__main__":
    import json
    import sys
    import tempfile

    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    print(json.dumps(build_all(target), indent=2))
