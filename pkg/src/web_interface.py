from pathlib import Path
from typing import Union

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse

from .errors import ConfigurationError
from .results_store import campaign_path, list_campaigns, load_summary, read_trace_csv, trace_path


def create_web_app(results_dir: Union[str, Path]) -> FastAPI:
    """Create FastAPI app browsing stored benchmark campaigns"""
    root = Path(results_dir)
    app = FastAPI(title="NPQN Bench - Results Dashboard")

    def campaign_dir(name: str) -> Path:
        try:
            path = campaign_path(root, name)
        except ConfigurationError:
            raise HTTPException(status_code=404, detail="Campaign not found")
        if not (path / "summary.json").is_file():
            raise HTTPException(status_code=404, detail="Campaign not found")
        return path

    @app.get("/", response_class=HTMLResponse)
    async def dashboard():
        """Results dashboard HTML page"""
        html_content = """
        <!DOCTYPE html>
        <html lang="en">
        <head>
            <meta charset="UTF-8">
            <meta name="viewport" content="width=device-width, initial-scale=1.0">
            <title>NPQN Bench - Results</title>
            <style>
                body {
                    font-family: 'Courier New', monospace;
                    background-color: #1a1a1a;
                    color: #00ff00;
                    line-height: 1.6;
                    padding: 20px;
                }

                .container {
                    max-width: 1200px;
                    margin: 0 auto;
                }

                h1 {
                    text-align: center;
                    margin-bottom: 30px;
                    color: #00ffff;
                }

                .panel {
                    background-color: #2a2a2a;
                    border: 2px solid #00ff00;
                    border-radius: 8px;
                    padding: 20px;
                    margin-bottom: 20px;
                }

                table {
                    width: 100%;
                    border-collapse: collapse;
                }

                th, td {
                    border-bottom: 1px solid #555;
                    padding: 4px 8px;
                    text-align: left;
                }

                .failed {
                    color: #ff6666;
                }

                a {
                    color: #ffff00;
                    cursor: pointer;
                }
            </style>
        </head>
        <body>
            <div class="container">
                <h1>Benchmark Campaigns</h1>
                <div class="panel">
                    <h2>Campaigns</h2>
                    <ul id="campaigns">Loading...</ul>
                </div>
                <div class="panel">
                    <h2 id="summary-title">Summary</h2>
                    <div id="summary">Select a campaign</div>
                </div>
            </div>

            <script>
                async function loadCampaigns() {
                    const response = await fetch('/api/campaigns');
                    const campaigns = await response.json();
                    const list = document.getElementById('campaigns');
                    if (campaigns.length === 0) {
                        list.innerHTML = '<li>No campaigns yet</li>';
                        return;
                    }
                    list.innerHTML = campaigns
                        .map(name => `<li><a onclick="loadSummary('${name}')">${name}</a></li>`)
                        .join('');
                }

                async function loadSummary(name) {
                    const response = await fetch(`/api/campaigns/${name}/summary`);
                    if (!response.ok) {
                        document.getElementById('summary').textContent = 'Campaign not found';
                        return;
                    }
                    const summary = await response.json();
                    document.getElementById('summary-title').textContent = `Summary: ${name}`;
                    const rows = summary.variants.map(v => {
                        const converged = v.trials.filter(t => t.converged).length;
                        const cls = converged === v.trials.length ? '' : 'failed';
                        const mean = v.mean_iterations === null ? '-' : v.mean_iterations.toFixed(1);
                        return `<tr class="${cls}"><td>${v.label}</td><td>${converged}/${v.trials.length}</td><td>${mean}</td></tr>`;
                    });
                    document.getElementById('summary').innerHTML =
                        '<table><tr><th>Method</th><th>Converged</th><th>Mean iterations</th></tr>' +
                        rows.join('') + '</table>';
                }

                loadCampaigns();
            </script>
        </body>
        </html>
        """
        return html_content

    @app.get("/api/campaigns")
    async def get_campaigns():
        """Names of stored campaigns"""
        return list_campaigns(root)

    @app.get("/api/campaigns/{name:path}/summary")
    async def get_summary(name: str):
        """Campaign summary as JSON"""
        path = campaign_dir(name)
        try:
            return load_summary(path / "summary.json").model_dump(mode="json")
        except ValueError as e:
            raise HTTPException(status_code=500, detail=f"Unreadable summary: {e}")

    @app.get("/api/campaigns/{name:path}/trace/{label}/{trial}")
    async def get_trace(name: str, label: str, trial: int):
        """Per-iteration trace of one trial"""
        path = trace_path(campaign_dir(name), label, trial)
        if not path.is_file():
            raise HTTPException(status_code=404, detail="Trace not found")
        return [record.model_dump() for record in read_trace_csv(path)]

    return app
