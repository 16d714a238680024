"""Run map servers in-process on loopback with real HTTP (uvicorn in a thread)."""
import socket
import threading
import time

import uvicorn

from .app import create_app


def _free_port(host):
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]


class ServerHandle:
    def __init__(self, service, host="127.0.0.1", port=0):
        self.service = service
        self.host = host
        self.port = port or _free_port(host)
        config = uvicorn.Config(create_app(service), host=host, port=self.port,
                                log_level="warning", log_config=None, access_log=False,
                                lifespan="off")
        self._server = uvicorn.Server(config)
        self._thread = None

    @property
    def endpoint(self):
        return f"http://{self.host}:{self.port}"

    def launch(self):
        """Start the server thread without waiting; pair with wait_started()."""
        self._thread = threading.Thread(target=self._server.run, daemon=True,
                                        name=f"map-server-{self.service.config.server_id}")
        self._thread.start()
        return self

    def wait_started(self, timeout=10.0):
        deadline = time.monotonic() + timeout
        while not self._server.started:
            if not self._thread.is_alive() or time.monotonic() > deadline:
                raise RuntimeError(f"map server {self.service.config.server_id} failed to start")
            time.sleep(0.005)
        return self

    def start(self, timeout=10.0):
        return self.launch().wait_started(timeout)

    def signal_stop(self):
        # in-flight requests are the caller's problem; don't wait out keep-alives
        self._server.should_exit = True
        self._server.force_exit = True

    def stop(self):
        self.signal_stop()
        if self._thread is not None:
            self._thread.join(timeout=10)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
