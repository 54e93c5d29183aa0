// Live execution feed. Events carry a server-assigned monotone index (the
// SSE id), so reconnects resume with ?after=<last seen> and anything the
// server replays below that mark is dropped — no duplicate rows, ever.

export interface FeedEvent {
  index: number
  kind: string
  data: Record<string, unknown>
}

export class EventFeed {
  private lastIndex = -1
  readonly events: FeedEvent[] = []

  /** Accepts the event only if its index advances the feed. */
  push(evt: FeedEvent): boolean {
    if (evt.index <= this.lastIndex) return false
    this.lastIndex = evt.index
    this.events.push(evt)
    return true
  }

  pushAll(evts: FeedEvent[]): FeedEvent[] {
    return evts.filter(e => this.push(e))
  }

  get resumeAfter(): number | undefined {
    return this.lastIndex < 0 ? undefined : this.lastIndex
  }
}

/** Parses a complete text/event-stream body into feed events. */
export function parseSseStream(text: string): FeedEvent[] {
  const out: FeedEvent[] = []
  for (const block of text.split("\n\n")) {
    if (!block.trim()) continue
    let index = -1
    let kind = "message"
    let data = "{}"
    for (const line of block.split("\n")) {
      if (line.startsWith("id: ")) index = Number(line.slice(4))
      else if (line.startsWith("event: ")) kind = line.slice(7)
      else if (line.startsWith("data: ")) data = line.slice(6)
    }
    if (index >= 0) out.push({ index, kind, data: JSON.parse(data) })
  }
  return out
}

/** Browser-side subscription with index-based resume on drop. */
export function subscribe(
  urlFor: (after?: number) => string,
  feed: EventFeed,
  onEvent: (evt: FeedEvent) => void,
  onPhase: (phase: string) => void,
): EventSource {
  const es = new EventSource(urlFor(feed.resumeAfter))
  const handle = (kind: string) => (e: MessageEvent) => {
    const evt: FeedEvent = {
      index: Number(e.lastEventId),
      kind,
      data: JSON.parse(e.data),
    }
    if (!feed.push(evt)) return
    if (kind === "phase") onPhase(String(evt.data["phase"]))
    else onEvent(evt)
  }
  for (const kind of ["move", "pick", "place", "error", "phase"]) {
    es.addEventListener(kind, handle(kind))
  }
  es.onerror = () => {
    es.close()
    // resume from the last rendered index; the feed drops any replay overlap
    subscribe(urlFor, feed, onEvent, onPhase)
  }
  return es
}
